#include "aircast/training.hpp"

#include "aircast/error.hpp"
#include "aircast/log.hpp"
#include "aircast/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace aircast {

void TrainConfig::validate() const
{
    std::vector<std::string> problems;
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        problems.emplace_back("lr must be finite and non-negative");
    }
    if (batch_size == 0) {
        problems.emplace_back("batch_size must be positive");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        problems.emplace_back("val_fraction must lie in [0, 1)");
    }
    if (!(clip_norm >= 0.0)) {
        problems.emplace_back("clip_norm must be non-negative");
    }
    if (quantiles.empty()) {
        problems.emplace_back("quantiles must not be empty");
    }
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
        if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0) || (i > 0 && !(quantiles[i] > quantiles[i - 1]))) {
            problems.emplace_back("quantiles must be strictly increasing inside (0, 1)");
            break;
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ValidationError(msg);
    }
}

nlohmann::ordered_json to_json(const TrainConfig& cfg)
{
    nlohmann::ordered_json j;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["quantiles"] = cfg.quantiles;
    j["seed"] = cfg.seed;
    j["patience"] = cfg.patience;
    j["clip_norm"] = cfg.clip_norm;
    j["val_fraction"] = cfg.val_fraction;
    j["freeze_doy"] = cfg.freeze_doy;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base)
{
    if (!j.is_object()) {
        throw ValidationError("training config must be a JSON object");
    }
    static const std::set<std::string> known = {"lr",       "batch_size", "epochs",       "quantiles",
                                                "seed",     "patience",   "clip_norm",    "val_fraction",
                                                "freeze_doy"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown training config key '" + key + "'");
        }
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("lr", base.lr);
        get("batch_size", base.batch_size);
        get("epochs", base.epochs);
        get("quantiles", base.quantiles);
        get("seed", base.seed);
        get("patience", base.patience);
        get("clip_norm", base.clip_norm);
        get("val_fraction", base.val_fraction);
        get("freeze_doy", base.freeze_doy);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("training config: ") + e.what());
    }
    return base;
}

nlohmann::ordered_json TrainReport::to_json() const
{
    nlohmann::ordered_json j;
    j["model_kind"] = model_kind;
    j["seed"] = seed;
    j["train_windows"] = train_windows;
    j["val_windows"] = val_windows;
    j["initial_train_loss"] = initial_train_loss;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = best_val_loss;
    j["checkpoint"] = checkpoint;
    return j;
}

std::vector<TrainingSample> make_samples(const PreparedCity& city, const std::vector<SampleWindow>& windows,
                                         InputMask mask)
{
    std::vector<TrainingSample> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back({make_inputs(city, w, mask), model_target(w)});
    }
    return out;
}

double quantile_loss(const Tensor& pred, const Tensor& target, std::span<const double> taus)
{
    if (!pred.all_finite() || !target.all_finite()) {
        throw NumericError("quantile loss received non-finite input");
    }
    nn::Graph g(false);
    return nn::pinball_loss(g.constant(pred), target, taus).value().item();
}

double evaluate_loss(const ForecastModel& model, const std::vector<TrainingSample>& samples)
{
    if (samples.empty()) {
        throw ValidationError("cannot evaluate a loss over zero samples");
    }
    double total = 0.0;
    for (const auto& s : samples) {
        nn::Graph g(false);
        const ModelOutputs out = model.forward(g, s.inputs);
        total += nn::pinball_loss(out.prediction, s.target, model.config().quantiles).value().item();
    }
    return total / static_cast<double>(samples.size());
}

namespace {

std::vector<Tensor> snapshot(const nn::ParamStore& store)
{
    std::vector<Tensor> values;
    values.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        values.push_back(store[i].value);
    }
    return values;
}

void restore(nn::ParamStore& store, const std::vector<Tensor>& values)
{
    for (std::size_t i = 0; i < store.size(); ++i) {
        store[i].value = values[i];
    }
}

} // namespace

TrainResult train_model(ForecastModel model, const std::vector<TrainingSample>& samples, const TrainConfig& tcfg)
{
    tcfg.validate();
    if (tcfg.quantiles != model.config().quantiles) {
        throw ValidationError("training quantiles differ from the model's quantiles");
    }
    if (samples.empty()) {
        throw ValidationError("training needs at least one window");
    }
    const Shape target_shape{model.config().stations, model.frames(), model.config().pollutants};
    for (const auto& s : samples) {
        if (s.target.shape() != target_shape) {
            throw ShapeError("training target " + shape_string(s.target.shape()) + " does not fit the "
                             + std::string(model_kind_name(model.kind())) + " model (" + shape_string(target_shape)
                             + ")");
        }
    }
    const auto started = std::chrono::steady_clock::now();
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * tcfg.val_fraction));
    const std::size_t n_train = samples.size() - n_val;
    if (n_train == 0) {
        throw ValidationError("validation split leaves no training windows");
    }
    const std::vector<TrainingSample> train(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<TrainingSample> val(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());

    TrainReport report;
    report.model_kind = std::string(model_kind_name(model.kind()));
    report.seed = tcfg.seed;
    report.train_windows = n_train;
    report.val_windows = n_val;
    report.initial_train_loss = evaluate_loss(model, train);
    report.best_val_loss = val.empty() ? report.initial_train_loss : evaluate_loss(model, val);
    std::vector<Tensor> best = snapshot(model.params());

    auto rng = make_rng(tcfg.seed, "train.shuffle." + report.model_kind);
    const nn::AdamConfig adam{tcfg.lr};
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    nn::ParamStore& params = model.params();
    params.zero_grad();
    nn::Parameter* doy = tcfg.freeze_doy && params.contains("temb.doy") ? &params.get("temb.doy") : nullptr;

    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t b = 0; b < n_train; b += tcfg.batch_size) {
                const std::size_t end = std::min(n_train, b + tcfg.batch_size);
                double batch_loss = 0.0;
                for (std::size_t i = b; i < end; ++i) {
                    const TrainingSample& s = train[order[i]];
                    nn::Graph g;
                    const ModelOutputs out = model.forward(g, s.inputs);
                    const nn::Var loss = nn::pinball_loss(out.prediction, s.target, tcfg.quantiles);
                    g.backward(loss);
                    batch_loss += loss.value().item();
                }
                const double count = static_cast<double>(end - b);
                if (doy != nullptr) {
                    doy->grad.fill(0.0);
                }
                params.scale_grad(1.0 / count);
                if (tcfg.clip_norm > 0.0) {
                    const double norm = params.grad_norm();
                    if (!std::isfinite(norm)) {
                        throw NumericError("non-finite gradient norm");
                    }
                    if (norm > tcfg.clip_norm) {
                        params.scale_grad(tcfg.clip_norm / norm);
                    }
                }
                nn::adam_step(params, adam);
                params.zero_grad();
                epoch_loss += batch_loss / count;
                ++batches;
            }
        } catch (const NumericError& e) {
            throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        if (!std::isfinite(report.train_loss.back())) {
            throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": loss is not finite");
        }
        if (val.empty()) {
            report.best_epoch = epoch;
            log::debug("epoch " + std::to_string(epoch) + " train " + std::to_string(report.train_loss.back()));
            continue;
        }
        report.val_loss.push_back(evaluate_loss(model, val));
        log::debug("epoch " + std::to_string(epoch) + " train " + std::to_string(report.train_loss.back()) + " val "
                   + std::to_string(report.val_loss.back()));
        if (report.val_loss.back() < report.best_val_loss) {
            report.best_val_loss = report.val_loss.back();
            report.best_epoch = epoch;
            best = snapshot(params);
        } else if (tcfg.patience > 0 && epoch - report.best_epoch >= tcfg.patience) {
            log::info("early stop after epoch " + std::to_string(epoch));
            break;
        }
    }
    if (val.empty()) {
        report.best_val_loss = report.train_loss.empty() ? report.initial_train_loss : report.train_loss.back();
    } else {
        restore(params, best);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {std::move(model), std::move(report)};
}

TrainResult train_model(ModelKind kind, const std::vector<TrainingSample>& samples, const ModelConfig& mcfg,
                        const TrainConfig& tcfg)
{
    return train_model(ForecastModel(mcfg, kind), samples, tcfg);
}

TrainResult train_6h(const std::vector<TrainingSample>& samples, const ModelConfig& mcfg, const TrainConfig& tcfg)
{
    return train_model(ModelKind::SixHour, samples, mcfg, tcfg);
}

TrainResult train_interp(const std::vector<TrainingSample>& samples, const ModelConfig& mcfg,
                         const TrainConfig& tcfg)
{
    return train_model(ModelKind::Interpolator, samples, mcfg, tcfg);
}

nlohmann::ordered_json GradientReport::to_json() const
{
    nlohmann::ordered_json j;
    j["max_rel_error"] = max_rel_error;
    j["tolerance"] = tolerance;
    j["passed"] = passed();
    j["tensors"] = nlohmann::ordered_json::array();
    for (const auto& t : tensors) {
        j["tensors"].push_back({{"model", t.model},
                                {"name", t.name},
                                {"elements", t.elements},
                                {"max_rel_error", t.max_rel_error},
                                {"max_abs_error", t.max_abs_error}});
    }
    return j;
}

ModelConfig micro_model_config()
{
    ModelConfig c;
    c.d_model = 8;
    c.temb_dim = 4;
    c.mlp_hidden = 8;
    c.resnet_depth = 2;
    c.resnet_width = 4;
    c.met_channels = 3;
    c.ems_channels = 2;
    c.stations = 2;
    c.n_lat = 4;
    c.n_lon = 4;
    return c;
}

namespace {

void check_model(ForecastModel& model, const ModelInputs& in, std::mt19937_64& rng, double h,
                 GradientReport& report)
{
    const auto& cfg = model.config();
    const Tensor target = nn::normal_tensor({cfg.stations, model.frames(), cfg.pollutants}, 1.0, rng);
    nn::ParamStore& params = model.params();
    params.zero_grad();
    {
        nn::Graph g;
        g.backward(nn::pinball_loss(model.forward(g, in).prediction, target, cfg.quantiles));
    }
    auto eval = [&] {
        nn::Graph g(false);
        return nn::pinball_loss(model.forward(g, in).prediction, target, cfg.quantiles).value().item();
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Parameter& p = params[i];
        TensorCheck tc{std::string(model_kind_name(model.kind())), p.name, p.value.size(), 0.0, 0.0};
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double orig = p.value[j];
            p.value[j] = orig + h;
            const double up = eval();
            p.value[j] = orig - h;
            const double down = eval();
            p.value[j] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p.grad[j];
            const double abs_err = std::abs(analytic - numeric);
            const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            tc.max_abs_error = std::max(tc.max_abs_error, abs_err);
            tc.max_rel_error = std::max(tc.max_rel_error, rel_err);
        }
        report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
        report.tensors.push_back(tc);
    }
    params.zero_grad();
}

} // namespace

GradientReport verify_gradients(const ModelConfig& mcfg, std::uint64_t seed, double step)
{
    mcfg.validate();
    if (mcfg.stations > 2 || mcfg.n_lat > 6 || mcfg.n_lon > 6) {
        throw ValidationError("gradient check runs on micro configurations (<= 2 stations, <= 6x6 grid)");
    }
    auto rng = make_rng(seed, "gradcheck");
    ModelConfig cfg = mcfg;
    cfg.seed = seed;
    ModelInputs in;
    in.x_prev = nn::normal_tensor({cfg.stations, cfg.pollutants}, 1.0, rng);
    in.x_curr = nn::normal_tensor({cfg.stations, cfg.pollutants}, 1.0, rng);
    in.site_pe = nn::normal_tensor({cfg.stations, 4}, 0.5, rng);
    in.grid = nn::normal_tensor({cfg.grid_channels(), cfg.n_lat, cfg.n_lon}, 1.0, rng);
    in.timecode = {static_cast<int>(std::uniform_int_distribution<int>(1, 366)(rng)),
                   static_cast<int>(std::uniform_int_distribution<int>(0, 23)(rng))};

    GradientReport report;
    for (ModelKind kind : {ModelKind::SixHour, ModelKind::Interpolator}) {
        ForecastModel model(cfg, kind);
        check_model(model, in, rng, step, report);
    }
    if (!report.passed()) {
        std::string failing;
        for (const auto& t : report.tensors) {
            if (t.max_rel_error > report.tolerance) {
                failing += " " + t.model + "/" + t.name;
            }
        }
        log::warn("gradient check exceeded " + std::to_string(report.tolerance) + " on:" + failing);
    }
    return report;
}

} // namespace aircast
