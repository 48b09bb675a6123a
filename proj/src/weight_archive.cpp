#include "adstage/weight_archive.hpp"

#include "adstage/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

namespace adstage {

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'W', 'A', 'R', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
           | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

void WeightArchive::add(std::string name, Tensor tensor)
{
    if (contains(name))
        throw ArchiveError("duplicate archive entry '" + name + "'");
    entries_.push_back({std::move(name), std::move(tensor)});
}

bool WeightArchive::contains(const std::string& name) const { return find(name) != nullptr; }

const Tensor* WeightArchive::find(const std::string& name) const
{
    for (const auto& e : entries_)
        if (e.name == name)
            return &e.tensor;
    return nullptr;
}

const Tensor& WeightArchive::get(const std::string& name) const
{
    if (const auto* t = find(name))
        return *t;
    throw NotFoundError("archive has no entry '" + name + "'");
}

std::vector<std::uint8_t> WeightArchive::encode_header() const
{
    nlohmann::json header;
    header["entries"] = nlohmann::json::array();
    for (const auto& e : entries_)
        header["entries"].push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"dtype", "f32"}});
    header["metadata"] = metadata_;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(9 + text.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(kVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    return out;
}

std::vector<std::uint8_t> WeightArchive::encode() const
{
    auto out = encode_header();
    for (const auto& e : entries_) {
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(e.tensor.raw());
        out.insert(out.end(), bytes, bytes + e.tensor.size() * sizeof(float));
    }
    return out;
}

WeightArchive WeightArchive::decode(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ArchiveError("not a weight archive (bad magic)");
    if (bytes[4] != kVersion)
        throw ArchiveError("unsupported archive version " + std::to_string(bytes[4]));
    const std::size_t header_len = get_u32(bytes.data() + 5);
    if (bytes.size() < 9 + header_len)
        throw ArchiveError("archive truncated inside header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(std::string("archive header is not valid JSON: ") + e.what());
    }

    WeightArchive archive;
    std::size_t pos = 9 + header_len;
    try {
        for (const auto& item : header.at("entries")) {
            if (item.at("dtype").get<std::string>() != "f32")
                throw ArchiveError("unsupported dtype in entry " + item.at("name").get<std::string>());
            auto shape = item.at("shape").get<Shape>();
            const std::size_t n = shape_size(shape) * sizeof(float);
            if (bytes.size() < pos + n)
                throw ArchiveError("archive truncated in payload of '" + item.at("name").get<std::string>() + "'");
            std::vector<float> data(shape_size(shape));
            std::memcpy(data.data(), bytes.data() + pos, n);
            pos += n;
            archive.add(item.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
        }
        if (header.contains("metadata"))
            archive.metadata_ = header.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(std::string("malformed archive header: ") + e.what());
    } catch (const ShapeError& e) {
        throw ArchiveError(std::string("malformed archive entry shape: ") + e.what());
    }
    if (pos != bytes.size())
        throw ArchiveError("archive has " + std::to_string(bytes.size() - pos) + " trailing bytes");
    return archive;
}

namespace {

template <typename Writer>
void write_atomic_with(const std::filesystem::path& path, Writer&& writer)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        writer(out);
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

} // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes)
{
    write_atomic_with(path, [&](std::ofstream& out) {
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    });
}

void WeightArchive::save(const std::filesystem::path& path) const
{
    // header first, then payloads streamed straight from the tensors
    const auto head = encode_header();
    write_atomic_with(path, [&](std::ofstream& out) {
        out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
        for (const auto& e : entries_)
            out.write(reinterpret_cast<const char*>(e.tensor.raw()),
                      static_cast<std::streamsize>(e.tensor.size() * sizeof(float)));
    });
}

WeightArchive WeightArchive::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

} // namespace adstage
