#include "adstage/checkpoint.hpp"

#include "adstage/errors.hpp"
#include "adstage/weight_archive.hpp"

namespace adstage {

void save_checkpoint(const std::filesystem::path& path, const ModelGraph& graph, const TrainingState& state,
                     const nlohmann::json& extra)
{
    WeightArchive a;
    for (const auto& [key, t] : graph.params)
        a.add("param/" + key, t);
    for (const auto& [key, t] : state.adam.m)
        a.add("adam/m/" + key, t);
    for (const auto& [key, t] : state.adam.v)
        a.add("adam/v/" + key, t);

    auto& meta = a.metadata();
    meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["kind"] = "checkpoint";
    meta["model"] = graph.name;
    meta["input_shape"] = graph.input_shape;
    meta["epochs_done"] = state.epochs_done;
    meta["adam_t"] = state.adam.t;
    meta["scheduler"] = state.scheduler.to_json();
    meta["history"] = nlohmann::json::array();
    for (const auto& r : state.history)
        meta["history"].push_back(to_json(r));
    try {
        a.save(path);
    } catch (const IoError& e) {
        throw CheckpointError(std::string("cannot save checkpoint: ") + e.what());
    }
}

namespace {

WeightArchive read_archive(const std::filesystem::path& path)
{
    try {
        auto a = WeightArchive::load(path);
        if (a.metadata().value("kind", "") != "checkpoint")
            throw CheckpointError(path.string() + " is not a checkpoint archive");
        return a;
    } catch (const IoError& e) {
        throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
    } catch (const ArchiveError& e) {
        throw CheckpointError(std::string("corrupt checkpoint ") + path.string() + ": " + e.what());
    }
}

} // namespace

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& path) { return read_archive(path).metadata(); }

void load_checkpoint(const std::filesystem::path& path, ModelGraph& graph, TrainingState& state)
{
    const auto a = read_archive(path);
    const auto& meta = a.metadata();

    auto params = graph.params;
    TrainingState next;
    try {
        if (meta.at("model").get<std::string>() != graph.name)
            throw CheckpointError("checkpoint holds model '" + meta.at("model").get<std::string>() + "', expected '"
                                  + graph.name + "'");
        for (auto& [key, t] : params) {
            const Tensor* src = a.find("param/" + key);
            if (!src)
                throw CheckpointError("checkpoint is missing parameter '" + key + "'");
            if (src->shape() != t.shape())
                throw CheckpointError("checkpoint parameter '" + key + "' has shape " + shape_string(src->shape())
                                      + ", model expects " + shape_string(t.shape()));
            t = *src;
        }
        for (const auto& e : a.entries()) {
            for (auto [prefix, target] : {std::pair{"adam/m/", &next.adam.m}, {"adam/v/", &next.adam.v}}) {
                const std::string p(prefix);
                if (e.name.starts_with(p)) {
                    const std::string key = e.name.substr(p.size());
                    auto it = params.find(key);
                    if (it == params.end() || it->second.shape() != e.tensor.shape())
                        throw CheckpointError("checkpoint optimizer state '" + e.name + "' does not match the model");
                    target->emplace(key, e.tensor);
                }
            }
        }
        next.epochs_done = meta.at("epochs_done").get<std::size_t>();
        next.adam.t = meta.at("adam_t").get<std::uint64_t>();
        next.scheduler = PlateauScheduler::from_json(meta.at("scheduler"));
        for (const auto& r : meta.at("history"))
            next.history.push_back(epoch_record_from_json(r));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint metadata invalid: ") + e.what());
    }
    graph.params = std::move(params);
    state = std::move(next);
}

} // namespace adstage
