#include "adstage/cli.hpp"

#include "adstage/architectures.hpp"
#include "adstage/checkpoint.hpp"
#include "adstage/cost.hpp"
#include "adstage/data_pipeline.hpp"
#include "adstage/errors.hpp"
#include "adstage/evaluator.hpp"
#include "adstage/report.hpp"
#include "adstage/toy_dataset.hpp"
#include "adstage/trainer.hpp"
#include "adstage/weight_archive.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace adstage {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

constexpr const char* kCacheName = "prepared.warc";

// serialises lines from concurrent training jobs
class Log {
public:
    explicit Log(std::ostream& os)
        : os_(os)
    {
    }
    void line(const std::string& s)
    {
        std::lock_guard lock(mu_);
        os_ << s << '\n' << std::flush;
    }

private:
    std::ostream& os_;
    std::mutex mu_;
};

std::string fixed(double v, int digits)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string join(const std::vector<std::string>& parts, const char* sep)
{
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i)
        s += (i ? sep : "") + parts[i];
    return s;
}

std::string histogram_line(const std::vector<std::string>& names, const std::vector<std::size_t>& counts)
{
    std::vector<std::string> parts;
    std::size_t total = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        parts.push_back((c < names.size() ? names[c] : std::to_string(c)) + "=" + std::to_string(counts[c]));
        total += counts[c];
    }
    return join(parts, " ") + " total=" + std::to_string(total);
}

template <class T>
T get_value(const nlohmann::json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

// ---- data ----------------------------------------------------------------------------

PreparedData prepare_from_source(const RunConfig& cfg, Log& log)
{
    LabeledImageSet set;
    if (!cfg.dataset.empty()) {
        if (!fs::is_directory(cfg.dataset))
            throw ConfigError("dataset directory not found: " + cfg.dataset);
        auto ingested = ingest_directory(cfg.dataset);
        for (const auto& f : ingested.failures)
            log.line("skipped " + f.path.string() + ": " + f.message);
        set = std::move(ingested.set);
    } else if (cfg.toy) {
        set = make_toy_dataset();
    } else {
        throw ConfigError("no input data: give --dataset <dir>, --data <cache> or --toy");
    }
    PrepareOptions opt;
    opt.apply_smote = cfg.scenario == "smote";
    opt.order = cfg.smote_order == "after-split" ? SmoteOrder::after_split : SmoteOrder::paper;
    opt.image_size = cfg.image_size ? cfg.image_size : (cfg.toy ? 32 : 176);
    opt.split.seed = cfg.seed;
    opt.smote.seed = cfg.seed;
    return prepare(set, opt);
}

PreparedData load_data(const RunConfig& cfg, Log& log)
{
    fs::path cache = cfg.data;
    if (cache.empty() && cfg.dataset.empty()) {
        // a cache left by 'prepare' wins over regenerating the toy fixture
        const auto prepared = fs::path(cfg.out) / kCacheName;
        if (!cfg.toy || fs::is_regular_file(prepared))
            cache = prepared;
    }
    if (cache.empty())
        return prepare_from_source(cfg, log);
    if (!fs::is_regular_file(cache))
        throw ConfigError("prepared cache not found: " + cache.string() + " (run 'prepare' or pass --dataset/--toy)");
    log.line("loading " + cache.string());
    return PreparedData::from_archive(WeightArchive::load(cache));
}

std::vector<std::size_t> subset_rows(const PreparedData& d, Subset which, std::size_t limit)
{
    auto rows = d.indices(which);
    if (limit && rows.size() > limit)
        rows.resize(limit);
    return rows;
}

std::vector<std::size_t> pick(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& rows)
{
    std::vector<std::size_t> out;
    out.reserve(rows.size());
    for (auto r : rows)
        out.push_back(labels[r]);
    return out;
}

void require_input_shape(const ModelGraph& graph, const Tensor& X, const std::string& what)
{
    if (X.rank() != 4 || !std::equal(graph.input_shape.begin(), graph.input_shape.end(), X.shape().begin() + 1))
        throw CheckpointError(what + " '" + graph.name + "' expects images " + shape_string(graph.input_shape)
                              + " but the data holds " + shape_string(X.shape()));
}

ModelGraph graph_for_checkpoint(const fs::path& path)
{
    const auto meta = read_checkpoint_metadata(path);
    std::string name = meta.value("model", "");
    ModelScale scale = ModelScale::full;
    const std::string suffix = "-toy";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
        name.resize(name.size() - suffix.size());
        scale = ModelScale::toy;
    }
    try {
        return build_model(name, scale);
    } catch (const ConfigError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

void echo_config(const RunConfig& cfg, const std::string& verb)
{
    write_files(cfg.out, {{verb + "_config.json", cfg.to_json().dump(2) + "\n"}});
}

// ---- verbs ---------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg, Log& log)
{
    if (cfg.dataset.empty() && !cfg.toy)
        throw ConfigError("prepare needs --dataset <dir> or --toy");
    const auto data = prepare_from_source(cfg, log);
    log.line("before: " + histogram_line(data.class_names, data.histogram_before));
    log.line("after:  " + histogram_line(data.class_names, data.histogram_after));
    const auto counts = [&](Subset s) { return std::to_string(data.indices(s).size()); };
    log.line("split:  train=" + counts(Subset::train) + " val=" + counts(Subset::val) + " test=" + counts(Subset::test));

    echo_config(cfg, "prepare");
    const fs::path cache = fs::path(cfg.out) / kCacheName;
    data.to_archive().save(cache);
    nlohmann::json hist{{"classes", data.class_names},
                        {"before", data.histogram_before},
                        {"after", data.histogram_after},
                        {"train", data.indices(Subset::train).size()},
                        {"val", data.indices(Subset::val).size()},
                        {"test", data.indices(Subset::test).size()}};
    write_files(cfg.out, {{"histogram.json", hist.dump(2) + "\n"}});
    log.line("wrote " + cache.string());
    return kExitOk;
}

void print_cost(const CostReport& r, const Shape* input, std::ostream& os)
{
    os << "model " << r.model;
    if (input)
        os << "  input " << shape_string(*input);
    os << "  flops convention " << to_string(r.convention) << "\n";
    os << std::left << std::setw(18) << "layer" << std::setw(16) << "kind" << std::setw(18) << "output" << std::right
       << std::setw(12) << "params" << std::setw(18) << "flops" << "\n";
    for (const auto& l : r.layers)
        os << std::left << std::setw(18) << l.name << std::setw(16) << l.kind << std::setw(18)
           << shape_string(l.output_shape) << std::right << std::setw(12) << group_thousands(l.params)
           << std::setw(18) << group_thousands(l.flops) << "\n";
    os << "total params " << group_thousands(r.total_params) << " (trainable " << group_thousands(r.trainable_params)
       << ", non-trainable " << group_thousands(r.total_params - r.trainable_params) << ")\n";
    os << "memory " << group_thousands(r.memory_bytes) << " bytes (" << fixed(to_mib(r.memory_bytes), 2) << " MiB)\n";
    os << "flops " << group_thousands(r.flops) << " (" << fixed(static_cast<double>(r.flops) / 1e9, 4)
       << " GFLOPs)\n";
}

int cmd_inspect(const RunConfig& cfg, const std::string& model, bool as_json, bool out_given, std::ostream& out)
{
    const auto convention = parse_flop_convention(cfg.flops_convention);
    const auto scale = cfg.toy ? ModelScale::toy : ModelScale::full;
    CostReport report;
    std::optional<Shape> input;
    if (model == "ensemble") {
        std::vector<CostReport> members;
        for (const auto& name : model_names())
            members.push_back(flop_count(build_model(name, scale), convention));
        report = ensemble_cost(members);
    } else {
        const auto known = model_names();
        if (std::find(known.begin(), known.end(), model) == known.end())
            throw ConfigError("unknown model '" + model + "'; known models: " + join(known, ", ") + ", ensemble");
        const auto graph = build_model(model, scale);
        input = graph.input_shape;
        report = flop_count(graph, convention);
    }
    if (as_json)
        out << to_json(report).dump(2) << "\n";
    else
        print_cost(report, input ? &*input : nullptr, out);
    if (out_given)
        write_files(cfg.out, {{report_stem(report.model) + "_cost.json", to_json(report).dump(2) + "\n"}});
    return kExitOk;
}

struct TrainJobResult {
    std::string model;
    fs::path checkpoint;
    EpochRecord last;
};

TrainJobResult train_one(const RunConfig& cfg, const std::string& model, const PreparedData& data, Log& log)
{
    const auto tcfg = cfg.train_config();
    const auto scale = cfg.toy ? ModelScale::toy : ModelScale::full;
    ModelGraph graph = kaiming_init(build_model(model, scale), cfg.seed);
    require_input_shape(graph, data.X, "model");

    if (!cfg.import_vgg19.empty()) {
        if (model != "ir-brainnet")
            throw ConfigError("--import-vgg19 applies to ir-brainnet only");
        if (!fs::is_regular_file(cfg.import_vgg19))
            throw ConfigError("pretrained archive not found: " + cfg.import_vgg19);
        auto imported = import_pretrained_layer(graph, "conv2", WeightArchive::load(cfg.import_vgg19), cfg.import_entry);
        graph = std::move(imported.graph);
        log.line(graph.name + ": " + group_thousands(imported.values_copied) + " values imported into conv2 from '"
                 + cfg.import_entry + "'");
    }

    TrainingState state = TrainingState::fresh(tcfg);
    if (!cfg.resume.empty()) {
        load_checkpoint(cfg.resume, graph, state);
        log.line(graph.name + ": resumed from " + cfg.resume + " after epoch " + std::to_string(state.epochs_done));
    }

    const auto tr = subset_rows(data, Subset::train, cfg.limit);
    const auto va = subset_rows(data, Subset::val, cfg.limit);
    if (tr.empty())
        throw DataError("no training rows in the prepared data");
    const Tensor Xtr = data.X.gather_rows(tr), Ytr = data.Y.gather_rows(tr);
    const Tensor Xva = va.empty() ? Tensor{} : data.X.gather_rows(va);
    const Tensor Yva = va.empty() ? Tensor{} : data.Y.gather_rows(va);
    log.line(graph.name + ": training on " + std::to_string(tr.size()) + " rows, validating on "
             + std::to_string(va.size()) + ", " + std::to_string(tcfg.epochs) + " epochs, batch "
             + std::to_string(tcfg.batch_size) + ", lr " + sci(tcfg.learning_rate));

    const fs::path ckpt = fs::path(cfg.out) / (model + ".ckpt");
    const nlohmann::json extra{{"scenario", cfg.scenario}, {"seed", cfg.seed}, {"train_config", to_json(tcfg)}};
    auto on_epoch = [&](const EpochRecord& r, const ModelGraph& g, const TrainingState& s) {
        log.line(g.name + " epoch " + std::to_string(r.epoch) + "/" + std::to_string(tcfg.epochs) + " loss "
                 + fixed(r.train_loss, 4) + " acc " + fixed(r.train_accuracy, 4) + " val_loss " + fixed(r.val_loss, 4)
                 + " val_acc " + fixed(r.val_accuracy, 4) + " lr " + sci(r.learning_rate));
        save_checkpoint(ckpt, g, s, extra);
    };
    fit(graph, {Xtr, Ytr}, {Xva, Yva}, tcfg, state, on_epoch);
    save_checkpoint(ckpt, graph, state, extra);
    write_files(cfg.out, {{model + "_history.csv", history_csv(state.history)}});
    log.line(graph.name + ": wrote " + ckpt.string());
    return {graph.name, ckpt, state.history.empty() ? EpochRecord{} : state.history.back()};
}

int cmd_train(const RunConfig& cfg, Log& log)
{
    std::vector<std::string> models;
    if (cfg.model == "both")
        models = model_names();
    else
        models = {cfg.model};
    if (!cfg.resume.empty() && models.size() != 1)
        throw ConfigError("--resume needs a single --model");
    if (!cfg.import_vgg19.empty() && !fs::is_regular_file(cfg.import_vgg19))
        throw ConfigError("pretrained archive not found: " + cfg.import_vgg19);
    if (!cfg.resume.empty() && !fs::is_regular_file(cfg.resume))
        throw ConfigError("checkpoint not found: " + cfg.resume);
    cfg.train_config().validate();

    const auto data = load_data(cfg, log);
    echo_config(cfg, "train");

    const auto t0 = std::chrono::steady_clock::now();
    if (models.size() == 1) {
        train_one(cfg, models.front(), data, log);
    } else {
        // independent jobs: each owns its graph and optimiser state
        std::vector<std::future<TrainJobResult>> jobs;
        for (const auto& m : models)
            jobs.push_back(std::async(std::launch::async, [&, m] { return train_one(cfg, m, data, log); }));
        std::exception_ptr first;
        for (auto& j : jobs) {
            try {
                j.get();
            } catch (...) {
                if (!first)
                    first = std::current_exception();
            }
        }
        if (first)
            std::rethrow_exception(first);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.line("training finished in " + fixed(secs, 1) + " s");
    return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& checkpoints, Log& log)
{
    if (checkpoints.empty())
        throw ConfigError("evaluate needs at least one checkpoint");
    for (const auto& c : checkpoints)
        if (!fs::is_regular_file(c))
            throw ConfigError("checkpoint not found: " + c);
    const auto convention = parse_flop_convention(cfg.flops_convention);
    const auto data = load_data(cfg, log);
    const auto rows = subset_rows(data, Subset::test, cfg.limit);
    if (rows.empty())
        throw DataError("no test rows in the prepared data");
    const Tensor X = data.X.gather_rows(rows);
    const auto truth = pick(data.labels, rows);
    echo_config(cfg, "evaluate");

    std::vector<EvaluationReport> reports;
    std::vector<PredictionMatrix> preds;
    std::vector<CostReport> costs;
    for (const auto& c : checkpoints) {
        ModelGraph graph = graph_for_checkpoint(c);
        TrainingState state;
        load_checkpoint(c, graph, state);
        require_input_shape(graph, X, "checkpoint");
        PredictionMatrix p{predict(graph, X), graph.name};
        auto r = evaluate(p, truth, data.class_names);
        r.cost = flop_count(graph, convention);
        costs.push_back(*r.cost);
        preds.push_back(std::move(p));
        reports.push_back(std::move(r));
    }

    std::vector<Comparison> comparisons;
    nlohmann::json agreement = nullptr;
    const auto correct_of = [&](const PredictionMatrix& p) { return correctness(argmax_rows(p.probs), truth); };
    auto compare = [&](const PredictionMatrix& a, const PredictionMatrix& b) {
        Comparison cmp{a.source, b.source, "per-sample correctness", {}, false};
        try {
            cmp.result = wilcoxon_signed_rank(correct_of(a), correct_of(b));
        } catch (const DegenerateTestError&) {
            // identical correctness on every sample: no evidence of a difference
            cmp.degenerate = true;
        }
        comparisons.push_back(cmp);
    };

    if (preds.size() >= 2) {
        auto ens = ensemble_average(preds);
        ens.source = "ensemble";
        auto r = evaluate(ens, truth, data.class_names);
        r.cost = ensemble_cost(costs);
        r.cost->model = "ensemble";

        std::vector<std::vector<std::size_t>> member_pred;
        for (const auto& p : preds)
            member_pred.push_back(argmax_rows(p.probs));
        const auto ens_pred = argmax_rows(ens.probs);
        std::size_t agree = 0, kept = 0;
        for (std::size_t n = 0; n < truth.size(); ++n) {
            bool all = true;
            for (const auto& mp : member_pred)
                all = all && mp[n] == member_pred.front()[n];
            if (all) {
                ++agree;
                kept += ens_pred[n] == member_pred.front()[n];
            }
        }
        agreement = {{"agreement_samples", agree}, {"ensemble_matches", kept}};

        if (preds.size() == 2)
            compare(preds[0], preds[1]);
        for (const auto& p : preds)
            compare(ens, p);
        preds.push_back(std::move(ens));
        reports.push_back(std::move(r));
    }

    for (const auto& r : reports)
        write_report(r, cfg.out);
    auto summary = summary_json(reports, comparisons);
    summary["argmax_agreement"] = agreement;
    summary["samples"] = truth.size();
    write_files(cfg.out, {{"summary.csv", summary_csv(reports)}, {"summary.json", summary.dump(2) + "\n"}});

    for (const auto& r : reports)
        log.line(r.model + ": accuracy " + fixed(r.metrics.accuracy, 4) + " macro_f1 " + fixed(r.metrics.macro_f1, 4)
                 + " auc " + fixed(r.roc.auc, 4) + " (" + r.roc.scheme + ")");
    for (const auto& c : comparisons)
        log.line("wilcoxon " + c.model_a + " vs " + c.model_b + ": n=" + std::to_string(c.result.n) + " W="
                 + fixed(c.result.statistic, 1) + " p=" + sci(c.result.p_value)
                 + (c.degenerate ? " (no differing samples)" : ""));
    if (!agreement.is_null())
        log.line("argmax agreement: ensemble matches on " + agreement["ensemble_matches"].dump() + " of "
                 + agreement["agreement_samples"].dump() + " agreement samples");
    log.line("reports written to " + cfg.out);
    return kExitOk;
}

int exit_code_for(const Error& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IngestionError*>(&e)
        || dynamic_cast<const CheckpointError*>(&e) || dynamic_cast<const TransferError*>(&e))
        return kExitUsage;
    return kExitRuntime;
}

} // namespace

// ---- RunConfig ------------------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        const char* k = key.c_str();
        if (key == "dataset")
            c.dataset = get_value<std::string>(j, k);
        else if (key == "data")
            c.data = get_value<std::string>(j, k);
        else if (key == "out")
            c.out = get_value<std::string>(j, k);
        else if (key == "scenario")
            c.scenario = get_value<std::string>(j, k);
        else if (key == "smote_order")
            c.smote_order = get_value<std::string>(j, k);
        else if (key == "model")
            c.model = get_value<std::string>(j, k);
        else if (key == "seed")
            c.seed = get_value<std::uint64_t>(j, k);
        else if (key == "flops_convention")
            c.flops_convention = get_value<std::string>(j, k);
        else if (key == "toy")
            c.toy = get_value<bool>(j, k);
        else if (key == "image_size")
            c.image_size = get_value<std::size_t>(j, k);
        else if (key == "limit")
            c.limit = get_value<std::size_t>(j, k);
        else if (key == "import_vgg19")
            c.import_vgg19 = get_value<std::string>(j, k);
        else if (key == "import_entry")
            c.import_entry = get_value<std::string>(j, k);
        else if (key == "resume")
            c.resume = get_value<std::string>(j, k);
        else if (key == "train") {
            if (!value.is_object())
                throw ConfigError("config key 'train' must be an object");
            c.train = value;
        } else
            throw ConfigError("unknown config key '" + key + "'");
    }
    c.train_config(); // rejects unknown train keys early
    return c;
}

nlohmann::json RunConfig::to_json() const
{
    return {{"dataset", dataset},
            {"data", data},
            {"out", out},
            {"scenario", scenario},
            {"smote_order", smote_order},
            {"model", model},
            {"seed", seed},
            {"flops_convention", flops_convention},
            {"toy", toy},
            {"image_size", image_size},
            {"limit", limit},
            {"import_vgg19", import_vgg19},
            {"import_entry", import_entry},
            {"resume", resume},
            {"train", adstage::to_json(train_config())}};
}

TrainConfig RunConfig::train_config() const
{
    TrainConfig t;
    if (toy) {
        // ~50 steps per epoch so batch-norm moving statistics keep pace with the weights
        t.epochs = 30;
        t.learning_rate = 1e-3;
        t.batch_size = 8;
    }
    t.shuffle_seed = seed;
    for (const auto& [key, value] : train.items()) {
        const char* k = key.c_str();
        if (key == "learning_rate")
            t.learning_rate = get_value<double>(train, k);
        else if (key == "beta1")
            t.beta1 = get_value<double>(train, k);
        else if (key == "beta2")
            t.beta2 = get_value<double>(train, k);
        else if (key == "epsilon")
            t.epsilon = get_value<double>(train, k);
        else if (key == "epochs")
            t.epochs = get_value<std::size_t>(train, k);
        else if (key == "batch_size")
            t.batch_size = get_value<std::size_t>(train, k);
        else if (key == "plateau_patience")
            t.plateau_patience = get_value<std::size_t>(train, k);
        else if (key == "plateau_factor")
            t.plateau_factor = get_value<double>(train, k);
        else if (key == "min_learning_rate")
            t.min_learning_rate = get_value<double>(train, k);
        else if (key == "shuffle_seed")
            t.shuffle_seed = get_value<std::uint64_t>(train, k);
        else
            throw ConfigError("unknown train config key '" + key + "'");
    }
    return t;
}

void RunConfig::validate() const
{
    if (scenario != "smote" && scenario != "no-smote")
        throw ConfigError("scenario must be smote or no-smote, got '" + scenario + "'");
    if (smote_order != "paper" && smote_order != "after-split")
        throw ConfigError("smote order must be paper or after-split, got '" + smote_order + "'");
    const auto known = model_names();
    if (model != "both" && std::find(known.begin(), known.end(), model) == known.end())
        throw ConfigError("unknown model '" + model + "'; known models: " + join(known, ", ") + ", both");
    parse_flop_convention(flops_convention);
    if (out.empty())
        throw ConfigError("output directory must not be empty");
    train_config().validate();
}

std::string group_thousands(std::uint64_t value)
{
    std::string digits = std::to_string(value);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i && (digits.size() - i) % 3 == 0)
            out += ',';
        out += digits[i];
    }
    return out;
}

// ---- entry point -----------------------------------------------------------------------

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"adstage: CNN ensemble for four-stage dementia classification of brain MRI slices"};
    app.name("adstage");
    app.require_subcommand(1);

    std::string config_path, scenario, smote_order, out_dir, flops, model = "ir-brainnet", dataset, data, import_vgg19,
                                                                   import_entry, resume, inspect_model;
    std::uint64_t seed = 0;
    std::size_t epochs = 0, limit = 0, batch_size = 0, image_size = 0;
    double lr = 0.0;
    bool toy = false, as_json = false;
    std::vector<std::string> checkpoints;

    auto shared = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        sub->add_option("--seed", seed, "seed for splitting, oversampling, initialisation and shuffling");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--scenario", scenario, "smote | no-smote");
        sub->add_option("--smote-order", smote_order, "paper (oversample, then split) | after-split");
        sub->add_option("--flops-convention", flops, "standard | macs | input-res");
        sub->add_flag("--toy", toy, "use the bundled synthetic 32x32 fixture and scaled-down models");
    };

    auto* prep = app.add_subcommand("prepare", "ingest, resize, oversample and split a dataset into a cache file");
    shared(prep);
    prep->add_option("--dataset", dataset, "image tree with one directory per class");
    prep->add_option("--image-size", image_size, "output side length (default 176, toy 32)");

    auto* insp = app.add_subcommand("inspect", "per-layer shapes, parameters, FLOPs and memory of a model");
    shared(insp);
    insp->add_option("model", inspect_model, "ir-brainnet | modified-demnet | ensemble")->required();
    insp->add_flag("--json", as_json, "print the report as JSON");

    auto* train = app.add_subcommand("train", "train one or both models and write checkpoints and histories");
    shared(train);
    train->add_option("--model", model, "ir-brainnet | modified-demnet | both");
    train->add_option("--data", data, "prepared cache file");
    train->add_option("--dataset", dataset, "raw image tree, prepared on the fly");
    train->add_option("--epochs", epochs, "number of epochs");
    train->add_option("--limit", limit, "use at most this many rows of each subset");
    train->add_option("--lr", lr, "initial learning rate");
    train->add_option("--batch-size", batch_size, "mini-batch size");
    train->add_option("--import-vgg19", import_vgg19, "archive holding a pretrained 3x3 64->128 convolution");
    train->add_option("--import-entry", import_entry, "entry name inside the archive (default block2_conv1)");
    train->add_option("--resume", resume, "continue from a checkpoint");

    auto* eval = app.add_subcommand("evaluate", "score checkpoints on the test split, ensemble and compare them");
    shared(eval);
    eval->add_option("--data", data, "prepared cache file");
    eval->add_option("--dataset", dataset, "raw image tree, prepared on the fly");
    eval->add_option("--limit", limit, "use at most this many test rows");
    eval->add_option("checkpoints", checkpoints, "one or more checkpoint files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();
    Log log(out);
    try {
        RunConfig cfg;
        if (sub->count("--config")) {
            if (!fs::is_regular_file(config_path))
                throw ConfigError("config file not found: " + config_path);
            std::ifstream in(config_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("cannot parse " + config_path + ": " + e.what());
            }
            cfg = RunConfig::from_json(j);
        }
        const auto given = [&](const char* flag) { return sub->get_option_no_throw(flag) && sub->count(flag) > 0; };
        if (given("--seed"))
            cfg.seed = seed;
        if (given("--out"))
            cfg.out = out_dir;
        if (given("--scenario"))
            cfg.scenario = scenario;
        if (given("--smote-order"))
            cfg.smote_order = smote_order;
        if (given("--flops-convention"))
            cfg.flops_convention = flops;
        if (given("--toy"))
            cfg.toy = toy;
        if (given("--dataset"))
            cfg.dataset = dataset;
        if (given("--data"))
            cfg.data = data;
        if (given("--image-size"))
            cfg.image_size = image_size;
        if (given("--limit"))
            cfg.limit = limit;
        if (given("--model"))
            cfg.model = model;
        if (given("--import-vgg19"))
            cfg.import_vgg19 = import_vgg19;
        if (given("--import-entry"))
            cfg.import_entry = import_entry;
        if (given("--resume"))
            cfg.resume = resume;
        if (given("--epochs"))
            cfg.train["epochs"] = epochs;
        if (given("--lr"))
            cfg.train["learning_rate"] = lr;
        if (given("--batch-size"))
            cfg.train["batch_size"] = batch_size;
        cfg.validate();

        if (verb == "prepare")
            return cmd_prepare(cfg, log);
        if (verb == "inspect")
            return cmd_inspect(cfg, inspect_model, as_json, given("--out"), out);
        if (verb == "train")
            return cmd_train(cfg, log);
        return cmd_evaluate(cfg, checkpoints, log);
    } catch (const Error& e) {
        err << "adstage " << verb << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "adstage " << verb << ": " << e.what() << "\n";
        return kExitRuntime;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"adstage"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace adstage
