#include "aircast/model.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"
#include "aircast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace aircast {

std::string_view model_kind_name(ModelKind kind)
{
    return kind == ModelKind::SixHour ? "six_hour" : "interpolator";
}

ModelKind parse_model_kind(std::string_view name)
{
    if (name == "six_hour") {
        return ModelKind::SixHour;
    }
    if (name == "interpolator") {
        return ModelKind::Interpolator;
    }
    throw ValidationError("unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const
{
    std::vector<std::string> problems;
    if (d_model == 0) {
        problems.emplace_back("d_model must be positive");
    }
    if (temb_dim < 2 || temb_dim % 2 != 0) {
        problems.emplace_back("temb_dim must be a positive even number");
    }
    if (mlp_hidden == 0) {
        problems.emplace_back("mlp_hidden must be positive");
    }
    if (resnet_depth == 0 || resnet_width < 2) {
        problems.emplace_back("resnet needs depth >= 1 and width >= 2");
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
    if (std::find(quantiles.begin(), quantiles.end(), 0.5) == quantiles.end()) {
        problems.emplace_back("quantiles must contain 0.5");
    }
    if (horizon_steps == 0) {
        problems.emplace_back("horizon_steps must be >= 1");
    }
    if (pollutants != kPollutants) {
        problems.emplace_back("pollutants must be " + std::to_string(kPollutants));
    }
    if (stations == 0) {
        problems.emplace_back("stations must be positive");
    }
    if (n_lat == 0 || n_lon == 0) {
        problems.emplace_back("grid dimensions must be positive");
    }
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ValidationError(msg);
    }
}

std::size_t ModelConfig::median_index() const
{
    auto it = std::find(quantiles.begin(), quantiles.end(), 0.5);
    if (it == quantiles.end()) {
        throw ValidationError("quantiles must contain 0.5");
    }
    return static_cast<std::size_t>(it - quantiles.begin());
}

nlohmann::ordered_json to_json(const ModelConfig& cfg)
{
    nlohmann::ordered_json j;
    j["d_model"] = cfg.d_model;
    j["temb_dim"] = cfg.temb_dim;
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["resnet_depth"] = cfg.resnet_depth;
    j["resnet_width"] = cfg.resnet_width;
    j["quantiles"] = cfg.quantiles;
    j["horizon_steps"] = cfg.horizon_steps;
    j["pollutants"] = cfg.pollutants;
    j["met_channels"] = cfg.met_channels;
    j["ems_channels"] = cfg.ems_channels;
    j["stations"] = cfg.stations;
    j["n_lat"] = cfg.n_lat;
    j["n_lon"] = cfg.n_lon;
    j["seed"] = cfg.seed;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base)
{
    if (!j.is_object()) {
        throw ValidationError("model config must be a JSON object");
    }
    static const std::set<std::string> known = {"d_model",      "temb_dim",     "mlp_hidden", "resnet_depth",
                                                "resnet_width", "quantiles",    "horizon_steps", "pollutants",
                                                "met_channels", "ems_channels", "stations",   "n_lat",
                                                "n_lon",        "seed"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown model config key '" + key + "'");
        }
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("d_model", base.d_model);
        get("temb_dim", base.temb_dim);
        get("mlp_hidden", base.mlp_hidden);
        get("resnet_depth", base.resnet_depth);
        get("resnet_width", base.resnet_width);
        get("quantiles", base.quantiles);
        get("horizon_steps", base.horizon_steps);
        get("pollutants", base.pollutants);
        get("met_channels", base.met_channels);
        get("ems_channels", base.ems_channels);
        get("stations", base.stations);
        get("n_lat", base.n_lat);
        get("n_lon", base.n_lon);
        get("seed", base.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model config: ") + e.what());
    }
    return base;
}

ModelConfig model_config_for(const PreparedCity& city, ModelConfig base)
{
    base.stations = city.stations();
    base.met_channels = city.data->met_channels();
    base.ems_channels = city.data->ems_channels();
    base.n_lat = city.data->geometry().n_lat;
    base.n_lon = city.data->geometry().n_lon;
    return base;
}

ForecastModel::ForecastModel(ModelConfig cfg, ModelKind kind) : cfg_(std::move(cfg)), kind_(kind)
{
    cfg_.validate();
    build();
}

ForecastModel::ForecastModel(const ForecastModel& other) : cfg_(other.cfg_), kind_(other.kind_)
{
    build();
    for (std::size_t i = 0; i < store_->size(); ++i) {
        nn::Parameter& p = (*store_)[i];
        const nn::Parameter& o = (*other.store_)[i];
        p.value = o.value;
        p.grad = o.grad;
        p.first_moment = o.first_moment;
        p.second_moment = o.second_moment;
    }
    store_->step = other.store_->step;
}

void ForecastModel::build()
{
    store_ = std::make_unique<nn::ParamStore>();
    auto rng = make_rng(cfg_.seed, kind_ == ModelKind::SixHour ? "model.six_hour.init" : "model.interpolator.init");
    temb_ = TemporalEmbedding::create(*store_, "temb", cfg_.temb_dim, rng);
    site_ = SiteAttentionWeights::create(*store_, "site", cfg_.site_features(), cfg_.d_model, cfg_.mlp_hidden, rng);
    coupling_ = CouplingWeights::create(*store_, "coupling", cfg_.grid_channels(), cfg_.resnet_width,
                                        cfg_.resnet_depth, cfg_.d_model, cfg_.mlp_hidden, rng);
    const std::size_t out = frames() * cfg_.pollutants * cfg_.quantile_count();
    head_w_ = &store_->create("head.w",
                              nn::normal_tensor({cfg_.d_model, out}, 0.1 / std::sqrt(static_cast<double>(cfg_.d_model)), rng));
    head_b_ = &store_->create("head.b", Tensor({out}, 0.0));
}

ModelOutputs ForecastModel::forward(nn::Graph& g, const ModelInputs& in) const
{
    const std::size_t n = cfg_.stations;
    const Shape frame_shape{n, cfg_.pollutants};
    if (in.x_prev.shape() != frame_shape || in.x_curr.shape() != frame_shape) {
        throw ShapeError("station frames must be " + shape_string(frame_shape) + ", got "
                         + shape_string(in.x_prev.shape()) + " and " + shape_string(in.x_curr.shape()));
    }
    if (in.site_pe.shape() != Shape{n, 4}) {
        throw ShapeError("site positional encoding must be " + shape_string({n, 4}) + ", got "
                         + shape_string(in.site_pe.shape()));
    }
    const Shape grid_shape{cfg_.grid_channels(), cfg_.n_lat, cfg_.n_lon};
    if (in.grid.shape() != grid_shape) {
        throw ShapeError("grid input must be " + shape_string(grid_shape) + ", got " + shape_string(in.grid.shape()));
    }
    const nn::Var t_emb = temporal_embed(g, in.timecode, temb_);
    const nn::Var site_in =
        assemble_site_input(g.constant(in.x_prev), g.constant(in.x_curr), g.constant(in.site_pe), t_emb);
    const SiteAttentionResult site = site_self_attention(g, site_in, site_);
    const GridLatent latent = grid_encode(g, g.constant(in.grid), coupling_);
    const CouplingResult coupled = cross_attention_coupling(g, site.output, latent, coupling_);
    const nn::Var head = linear(g, coupled.output, *head_w_, head_b_);
    const nn::Var pred = nn::reshape(head, {n, frames(), cfg_.pollutants, cfg_.quantile_count()});
    return {pred, site.attention, coupled.attention};
}

void ForecastModel::zero_head()
{
    head_w_->value.fill(0.0);
    head_b_->value.fill(0.0);
}

void ForecastModel::save(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["kind"] = model_kind_name(kind_);
    j["config"] = to_json(cfg_);
    write_text_file(dir / "model.json", j.dump(2) + "\n");
    nn::save_checkpoint(*store_, dir);
}

ForecastModel ForecastModel::load(const std::filesystem::path& dir)
{
    const auto path = dir / "model.json";
    if (!std::filesystem::exists(path)) {
        throw MissingArtifactError("model checkpoint not found: " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
    ForecastModel m(model_config_from_json(j.at("config")), parse_model_kind(j.at("kind").get<std::string>()));
    nn::load_checkpoint(*m.store_, dir);
    return m;
}

ModelInputs make_inputs(const PreparedCity& city, const SampleWindow& w, InputMask mask)
{
    if (!w.met || !w.ems) {
        throw ValidationError("window at " + format_hour(w.anchor) + " lacks gridded inputs");
    }
    return {w.x_prev, w.x_curr, city.site_pe, city.grid_input(*w.met, *w.ems, mask), w.timecode};
}

Tensor model_target(const SampleWindow& w)
{
    if (w.kind == WindowKind::SixHour) {
        const std::size_t n = w.target.dim(0);
        return w.target.reshaped({n, 1, w.target.dim(1)});
    }
    const std::size_t frames = w.target.dim(0), n = w.target.dim(1), p = w.target.dim(2);
    Tensor out({n, frames, p});
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t k = 0; k < p; ++k) {
                out[(s * frames + f) * p + k] = w.target.at(f, s, k);
            }
        }
    }
    return out;
}

} // namespace aircast
