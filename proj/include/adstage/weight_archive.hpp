#pragma once

#include "adstage/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace adstage {

/// Named float32 tensors in a portable binary container.
///
/// Layout: "WARC", version byte 0x01, u32 little-endian header length, a UTF-8
/// JSON header {"entries":[{"name","shape","dtype":"f32"},...],"metadata":{}},
/// then each entry's row-major little-endian float32 payload in header order.
class WeightArchive {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    static constexpr std::uint8_t kVersion = 0x01;

    /// Appends an entry. Throws ArchiveError on a duplicate name.
    void add(std::string name, Tensor tensor);
    bool contains(const std::string& name) const;
    /// Throws NotFoundError when absent.
    const Tensor& get(const std::string& name) const;
    const Tensor* find(const std::string& name) const;

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    nlohmann::json& metadata() noexcept { return metadata_; }
    const nlohmann::json& metadata() const noexcept { return metadata_; }

    std::vector<std::uint8_t> encode() const;
    /// Throws ArchiveError on malformed or truncated input.
    static WeightArchive decode(const std::vector<std::uint8_t>& bytes);

    /// Atomic write (temp file + rename). Throws IoError.
    void save(const std::filesystem::path& path) const;
    /// Throws IoError when unreadable, ArchiveError when malformed.
    static WeightArchive load(const std::filesystem::path& path);

private:
    std::vector<std::uint8_t> encode_header() const;

    std::vector<Entry> entries_;
    nlohmann::json metadata_ = nlohmann::json::object();
};

/// Writes bytes to `path` through a sibling temp file and a rename so that a
/// failed write leaves nothing behind. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

} // namespace adstage
