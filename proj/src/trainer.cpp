#include "adstage/trainer.hpp"

#include "adstage/errors.hpp"
#include "adstage/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace adstage {

void TrainConfig::validate() const
{
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError(std::string(what) + " must be positive");
    };
    positive(learning_rate, "learning_rate");
    positive(epsilon, "epsilon");
    positive(min_learning_rate, "min_learning_rate");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("Adam decay rates must lie in (0,1)");
    if (epochs == 0)
        throw ConfigError("epochs must be at least 1");
    if (batch_size == 0)
        throw ConfigError("batch_size must be at least 1");
    if (plateau_patience == 0)
        throw ConfigError("plateau_patience must be at least 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
        throw ConfigError("plateau_factor must lie in (0,1)");
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
            {"beta2", c.beta2}, {"epsilon", c.epsilon},
            {"epochs", c.epochs}, {"batch_size", c.batch_size},
            {"plateau_patience", c.plateau_patience}, {"plateau_factor", c.plateau_factor},
            {"min_learning_rate", c.min_learning_rate}, {"shuffle_seed", c.shuffle_seed}};
}

// ---- Adam ---------------------------------------------------------------------------

void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& config)
{
    if (!(lr > 0.0))
        throw ConfigError("learning rate must be positive");
    for (const auto& [key, g] : grads) {
        auto it = params.find(key);
        if (it == params.end())
            throw TrainingError("gradient for unknown parameter '" + key + "'");
        if (g.shape() != it->second.shape())
            throw TrainingError("gradient shape " + shape_string(g.shape()) + " does not match parameter '" + key
                                + "' " + shape_string(it->second.shape()));
        if (!g.all_finite())
            throw TrainingError("non-finite gradient for parameter '" + key + "'");
    }

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (const auto& [key, g] : grads) {
        Tensor& p = params.at(key);
        auto [mit, m_new] = state.m.try_emplace(key, g.shape());
        auto [vit, v_new] = state.v.try_emplace(key, g.shape());
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double step = lr * (mi / c1) / (std::sqrt(vi / c2) + config.epsilon);
            p[i] = static_cast<float>(p[i] - step);
        }
    }
}

// ---- plateau ----------------------------------------------------------------------------

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double min_lr)
    : lr_(lr)
    , patience_(patience)
    , factor_(factor)
    , min_lr_(min_lr)
{
}

double PlateauScheduler::observe(double loss)
{
    if (!has_best_ || loss < best_) {
        best_ = loss;
        has_best_ = true;
        wait_ = 0;
        return lr_;
    }
    if (++wait_ >= patience_) {
        lr_ = std::max(lr_ * factor_, min_lr_);
        ++reductions_;
        wait_ = 0;
    }
    return lr_;
}

nlohmann::json PlateauScheduler::to_json() const
{
    return {{"lr", lr_}, {"patience", patience_}, {"factor", factor_}, {"min_lr", min_lr_},
            {"best", best_}, {"has_best", has_best_}, {"wait", wait_}, {"reductions", reductions_}};
}

PlateauScheduler PlateauScheduler::from_json(const nlohmann::json& j)
{
    PlateauScheduler s(j.at("lr").get<double>(), j.at("patience").get<std::size_t>(), j.at("factor").get<double>(),
                       j.at("min_lr").get<double>());
    s.best_ = j.at("best").get<double>();
    s.has_best_ = j.at("has_best").get<bool>();
    s.wait_ = j.at("wait").get<std::size_t>();
    s.reductions_ = j.at("reductions").get<std::size_t>();
    return s;
}

double plateau_lr(const std::vector<double>& losses, double initial_lr, std::size_t patience, double factor)
{
    PlateauScheduler s(initial_lr, patience, factor);
    for (double l : losses)
        s.observe(l);
    return s.lr();
}

// ---- history -------------------------------------------------------------------------------

std::string history_csv(const History& history)
{
    std::ostringstream out;
    out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
    char line[256];
    for (const auto& r : history) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_accuracy,
                      r.val_loss, r.val_accuracy, r.learning_rate);
        out << line;
    }
    return out.str();
}

nlohmann::json to_json(const EpochRecord& r)
{
    return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_accuracy},
            {"val_loss", r.val_loss}, {"val_acc", r.val_accuracy}, {"lr", r.learning_rate}, {"steps", r.steps}};
}

EpochRecord epoch_record_from_json(const nlohmann::json& j)
{
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_accuracy = j.at("train_acc").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.val_accuracy = j.at("val_acc").get<double>();
    r.learning_rate = j.at("lr").get<double>();
    r.steps = j.at("steps").get<std::size_t>();
    return r;
}

TrainingState TrainingState::fresh(const TrainConfig& config)
{
    TrainingState s;
    s.scheduler = PlateauScheduler(config.learning_rate, config.plateau_patience, config.plateau_factor,
                                   config.min_learning_rate);
    return s;
}

// ---- loop ------------------------------------------------------------------------------------

namespace {

std::size_t argmax_row(const Tensor& t, std::size_t row)
{
    const std::size_t c = t.dim(1);
    const float* p = t.raw() + row * c;
    return static_cast<std::size_t>(std::max_element(p, p + c) - p);
}

bool has_batchnorm(const ModelGraph& g)
{
    return std::any_of(g.layers.begin(), g.layers.end(), [](const LayerSpec& l) { return l.kind == LayerKind::batchnorm; });
}

} // namespace

BatchGradients compute_gradients(const ModelGraph& graph, const Tensor& X, const Tensor& Y)
{
    auto pass = forward(graph, X, Mode::train, true);
    auto ce = cross_entropy(pass.probs, Y);
    BatchGradients out;
    out.loss = ce.loss;
    for (std::size_t n = 0; n < X.dim(0); ++n)
        if (argmax_row(pass.probs, n) == argmax_row(Y, n))
            ++out.correct;
    if (std::isfinite(ce.loss))
        out.grads = backward(graph, pass, ce.dscores);
    out.bn_states = std::move(pass.bn_states);
    return out;
}

LossAccuracy evaluate_loss(const ModelGraph& graph, const Tensor& X, const Tensor& Y, std::size_t batch)
{
    const Tensor probs = predict(graph, X, batch);
    const auto ce = cross_entropy(probs, Y);
    std::size_t correct = 0;
    for (std::size_t n = 0; n < X.dim(0); ++n)
        if (argmax_row(probs, n) == argmax_row(Y, n))
            ++correct;
    return {ce.loss, static_cast<double>(correct) / static_cast<double>(X.dim(0))};
}

History fit(ModelGraph& graph, Batch train, Batch val, const TrainConfig& config, TrainingState& state,
            const EpochCallback& on_epoch)
{
    config.validate();
    const std::size_t n = train.X.empty() ? 0 : train.X.dim(0);
    if (n == 0)
        throw TrainingError("training set is empty");
    if (train.Y.rank() != 2 || train.Y.dim(0) != n)
        throw ShapeError("training labels do not match training images");
    const bool has_val = !val.X.empty();
    const bool merge_singleton = has_batchnorm(graph);

    while (state.epochs_done < config.epochs) {
        const std::size_t epoch = state.epochs_done + 1;
        const double lr = state.scheduler.lr();
        Rng rng(config.shuffle_seed, epoch);
        const auto order = rng.permutation(n);

        std::vector<std::pair<std::size_t, std::size_t>> batches;
        for (std::size_t b = 0; b < n; b += config.batch_size)
            batches.emplace_back(b, std::min(n, b + config.batch_size));
        if (merge_singleton && batches.size() > 1 && batches.back().second - batches.back().first == 1) {
            batches[batches.size() - 2].second = n;
            batches.pop_back();
        }

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto [begin, end] = batches[bi];
            const std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Tensor xb = train.X.gather_rows(rows);
            const Tensor yb = train.Y.gather_rows(rows);
            auto g = compute_gradients(graph, xb, yb);
            if (!std::isfinite(g.loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch "
                                    + std::to_string(bi + 1));
            for (const auto& [name, grad] : g.grads)
                if (!grad.all_finite())
                    throw TrainingError("non-finite gradient for parameter '" + name + "' at epoch "
                                        + std::to_string(epoch) + ", batch " + std::to_string(bi + 1));
            adam_step(graph.params, g.grads, state.adam, lr, config);
            apply_batchnorm_states(graph, g.bn_states);
            loss_sum += g.loss * static_cast<double>(end - begin);
            correct += g.correct;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        rec.learning_rate = lr;
        rec.steps = batches.size();
        if (has_val) {
            const auto v = evaluate_loss(graph, val.X, val.Y, config.batch_size);
            rec.val_loss = v.loss;
            rec.val_accuracy = v.accuracy;
        } else {
            rec.val_loss = rec.train_loss;
            rec.val_accuracy = rec.train_accuracy;
        }
        if (!std::isfinite(rec.val_loss))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        state.scheduler.observe(rec.val_loss);
        state.history.push_back(rec);
        state.epochs_done = epoch;
        if (on_epoch)
            on_epoch(rec, graph, state);
    }
    return state.history;
}

History fit(ModelGraph& graph, Batch train, Batch val, const TrainConfig& config)
{
    auto state = TrainingState::fresh(config);
    return fit(graph, train, val, config, state);
}

} // namespace adstage
