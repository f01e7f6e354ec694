#include "aircast/cli.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"
#include "aircast/log.hpp"
#include "aircast/plot.hpp"
#include "aircast/rng.hpp"

#include <chrono>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace aircast {

namespace {

const std::set<std::string> kCommands = {"synth",    "train",   "train-interp", "forecast",
                                         "evaluate", "ablate",  "gradcheck",    "plot"};

std::string absolute_or_empty(const std::string& p)
{
    return p.empty() ? p : std::filesystem::absolute(p).lexically_normal().string();
}

nlohmann::ordered_json ablation_json(const AblationSetup& a)
{
    return {{"window_stride", a.window_stride},
            {"block_hours", a.block_hours},
            {"holdout_every", a.holdout_every},
            {"forecast_stride", a.forecast_stride},
            {"forecast_steps", a.forecast_steps}};
}

} // namespace

nlohmann::ordered_json RunConfig::to_json() const
{
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    if (!city.empty()) {
        j["city"] = city;
    }
    if (command == "synth") {
        j["synth"] = aircast::to_json(synth);
        return j;
    }
    if (command == "gradcheck") {
        j["model"] = aircast::to_json(model);
        return j;
    }
    if (command == "plot") {
        j["report"] = report;
        return j;
    }
    if (command == "evaluate") {
        j["data"] = data;
        j["forecast"] = forecast;
        j["max_gap"] = max_gap;
        return j;
    }
    j["data"] = data;
    j["max_gap"] = max_gap;
    if (command == "forecast") {
        j["checkpoint"] = checkpoint;
        j["interp_checkpoint"] = interp_checkpoint;
        j["inits"] = inits;
        j["init_every"] = init_every;
        j["steps"] = steps;
        return j;
    }
    j["stride"] = stride;
    j["model"] = aircast::to_json(model);
    j["train"] = aircast::to_json(train);
    if (command == "ablate") {
        j["arms"] = arms;
        j["ablation"] = ablation_json(ablation);
    }
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base)
{
    if (!j.is_object()) {
        throw ValidationError("config file must hold a JSON object");
    }
    static const std::set<std::string> known = {"command", "seed",   "city",  "data",       "checkpoint",
                                                "interp_checkpoint", "forecast", "report", "synth",
                                                "model",   "train",  "stride", "max_gap",   "inits",
                                                "init_every",        "steps", "arms",   "ablation"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown config key '" + key + "'");
        }
    }
    try {
        if (j.contains("command") && j.at("command").get<std::string>() != base.command) {
            throw ValidationError("config file is for command '" + j.at("command").get<std::string>()
                                  + "', not '" + base.command + "'");
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("seed", base.seed);
        get("city", base.city);
        get("data", base.data);
        get("checkpoint", base.checkpoint);
        get("interp_checkpoint", base.interp_checkpoint);
        get("forecast", base.forecast);
        get("report", base.report);
        get("stride", base.stride);
        get("max_gap", base.max_gap);
        get("inits", base.inits);
        get("init_every", base.init_every);
        get("steps", base.steps);
        get("arms", base.arms);
        if (j.contains("synth")) {
            base.synth = synth_config_from_json(j.at("synth"), base.synth);
        }
        if (j.contains("model")) {
            base.model = model_config_from_json(j.at("model"), base.model);
        }
        if (j.contains("train")) {
            base.train = train_config_from_json(j.at("train"), base.train);
        }
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            static const std::set<std::string> akeys = {"window_stride", "block_hours", "holdout_every",
                                                        "forecast_stride", "forecast_steps"};
            for (const auto& [key, _] : a.items()) {
                if (!akeys.contains(key)) {
                    throw ValidationError("unknown ablation key '" + key + "'");
                }
            }
            if (a.contains("window_stride")) {
                base.ablation.window_stride = a.at("window_stride").get<std::size_t>();
            }
            if (a.contains("block_hours")) {
                base.ablation.block_hours = a.at("block_hours").get<std::size_t>();
            }
            if (a.contains("holdout_every")) {
                base.ablation.holdout_every = a.at("holdout_every").get<std::size_t>();
            }
            if (a.contains("forecast_stride")) {
                base.ablation.forecast_stride = a.at("forecast_stride").get<std::size_t>();
            }
            if (a.contains("forecast_steps")) {
                base.ablation.forecast_steps = a.at("forecast_steps").get<std::size_t>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config file: ") + e.what());
    }
    return base;
}

namespace {

struct Flags {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string city;
    std::string arms;
    std::string quantiles;
    std::size_t steps = 0;
    std::string data;
    std::string checkpoint;
    std::string interp_checkpoint;
    std::string init;
    std::size_t init_every = 0;
    std::string forecast;
    std::string report;
    std::size_t epochs = 0;
    std::size_t stride = 0;
};

std::vector<double> parse_quantiles(const std::string& list)
{
    std::vector<double> q;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            q.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::logic_error&) {
            throw ValidationError("invalid quantile '" + item + "'");
        }
    }
    return q;
}

std::vector<std::string> split_list(const std::string& list)
{
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j)
{
    write_text_file(path, j.dump(2) + "\n");
}

void write_timing(const std::filesystem::path& out, double seconds)
{
    write_json(out / "timing.json", {{"wall_seconds", seconds}});
}

std::shared_ptr<const CityDataset> load_city(const RunConfig& rc)
{
    if (rc.data.empty()) {
        throw MissingArtifactError("no dataset directory given (--data)");
    }
    auto data = std::make_shared<const CityDataset>(read_dataset(rc.data));
    if (!rc.city.empty() && rc.city != data->city) {
        throw ValidationError("dataset " + rc.data + " holds city '" + data->city + "', not '" + rc.city + "'");
    }
    return data;
}

void cmd_synth(const RunConfig& rc)
{
    const CityDataset d = synth_generate(rc.synth, rc.seed);
    write_dataset(rc.out, d);
    log::info("wrote synthetic city '" + d.city + "' (" + std::to_string(d.hours) + " hours) to " + rc.out.string());
}

void cmd_train(const RunConfig& rc, ModelKind kind)
{
    const auto started = std::chrono::steady_clock::now();
    const PreparedCity city = prepare_city(load_city(rc), rc.max_gap);
    const WindowKind wk = kind == ModelKind::SixHour ? WindowKind::SixHour : WindowKind::Interpolation;
    const WindowSet ws = build_windows(city, rc.stride, wk);
    log::info(std::to_string(ws.windows.size()) + " windows (" + std::to_string(ws.dropped) + " dropped)");
    const auto samples = make_samples(city, ws.windows);
    TrainResult r = train_model(kind, samples, model_config_for(city, rc.model), rc.train);
    r.model.save(rc.out / "checkpoint");
    r.report.checkpoint = "checkpoint";
    write_json(rc.out / "train_report.json", r.report.to_json());
    write_timing(rc.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
}

std::vector<Hour> forecast_inits(const RunConfig& rc, const PreparedCity& city)
{
    std::vector<Hour> inits;
    for (const auto& s : rc.inits) {
        inits.push_back(parse_hour(s));
    }
    const std::size_t span = 6 * rc.steps;
    if (city.data->hours <= span + 6) {
        throw ValidationError("dataset is too short for a " + std::to_string(span) + "-hour forecast");
    }
    if (rc.init_every > 0) {
        for (std::size_t t = 6; t + span < city.data->hours; t += rc.init_every) {
            inits.push_back(city.data->start + std::chrono::hours(t));
        }
    }
    if (inits.empty()) {
        inits.push_back(city.data->start + std::chrono::hours(city.data->hours - 1 - span));
    }
    return inits;
}

void cmd_forecast(const RunConfig& rc)
{
    if (rc.checkpoint.empty()) {
        throw MissingArtifactError("no 6-hour model checkpoint given (--checkpoint)");
    }
    const ForecastModel model = ForecastModel::load(rc.checkpoint);
    std::optional<ForecastModel> interp;
    if (!rc.interp_checkpoint.empty()) {
        interp.emplace(ForecastModel::load(rc.interp_checkpoint));
    }
    if (!rc.model.quantiles.empty() && rc.model.quantiles != model.config().quantiles
        && rc.model.quantiles != ModelConfig{}.quantiles) {
        throw ValidationError("requested quantiles differ from the checkpoint's");
    }
    const PreparedCity city = prepare_city(load_city(rc), rc.max_gap);
    std::vector<ForecastBundle> bundles;
    for (Hour t0 : forecast_inits(rc, city)) {
        bundles.push_back(interp ? hourly_forecast(model, *interp, city, t0, rc.steps)
                                 : forecast_6h(model, city, t0, rc.steps));
    }
    write_forecast_csv(rc.out / "forecast.csv", bundles);
    const RolloutInputs in = rollout_inputs(city, bundles.front().init_time, 1);
    const AttentionMaps maps =
        attention_maps(model, {in.x_prev, in.x_curr, in.site_pe, in.step_grids.front(), encode_time(in.t0)});
    write_cross_attention_csv(rc.out / "cross_attention.csv", maps, city.station_ids(), city.data->geometry());
}

void cmd_evaluate(const RunConfig& rc)
{
    if (rc.forecast.empty()) {
        throw MissingArtifactError("no forecast file given (--forecast)");
    }
    if (!std::filesystem::exists(rc.forecast)) {
        throw MissingArtifactError("forecast file not found: " + rc.forecast);
    }
    const PreparedCity city = prepare_city(load_city(rc), rc.max_gap);
    const MetricsReport r = window_report(read_forecast_csv(rc.forecast), city, city.data->city);
    write_json(rc.out / "report.json", r.to_json());
    write_text_file(rc.out / "report.csv", r.to_csv());
}

void cmd_ablate(const RunConfig& rc)
{
    const auto started = std::chrono::steady_clock::now();
    std::vector<AblationArm> arms;
    for (const auto& a : rc.arms) {
        arms.push_back(parse_arm(a));
    }
    if (arms.empty()) {
        throw ValidationError("no ablation arms given");
    }
    const PreparedCity city = prepare_city(load_city(rc), rc.max_gap);
    nlohmann::ordered_json master;
    master["arms"] = nlohmann::ordered_json::array();
    for (AblationArm arm : arms) {
        const std::string name(arm_name(arm));
        ModelConfig mcfg = rc.model;
        TrainConfig tcfg = rc.train;
        mcfg.seed = tcfg.seed = substream_seed(rc.seed, "ablation." + name);
        const AblationResult r = run_ablation({arm}, city, mcfg, tcfg, rc.ablation);
        const auto j = r.to_json();
        write_json(rc.out / ("report_" + name + ".json"), j);
        master["arms"].push_back(j);
        log::info("arm " + name + ": held-out RMSE " + std::to_string(r.heldout_rmse));
    }
    write_json(rc.out / "ablation.json", master);
    write_timing(rc.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
}

bool cmd_gradcheck(const RunConfig& rc)
{
    const auto started = std::chrono::steady_clock::now();
    const GradientReport r = verify_gradients(rc.model, rc.seed);
    write_json(rc.out / "gradcheck.json", r.to_json());
    write_timing(rc.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (!r.passed()) {
        std::string failing;
        for (const auto& t : r.tensors) {
            if (t.max_rel_error > r.tolerance) {
                failing += (failing.empty() ? "" : ", ") + t.model + "/" + t.name;
            }
        }
        throw NumericError("gradient check failed for: " + failing);
    }
    return true;
}

void cmd_plot(const RunConfig& rc)
{
    if (rc.report.empty()) {
        throw MissingArtifactError("no metrics report given (--report)");
    }
    if (!std::filesystem::exists(rc.report)) {
        throw MissingArtifactError("metrics report not found: " + rc.report);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(rc.report));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("cannot parse " + rc.report + ": " + e.what());
    }
    emit_plot_data(metrics_report_from_json(j.contains("report") ? j.at("report") : j), rc.out);
}

RunConfig resolve(const std::string& command, const Flags& f, const CLI::App& sub)
{
    RunConfig rc;
    rc.command = command;
    if (command == "gradcheck") {
        rc.model = micro_model_config();
    }
    if (!f.config.empty()) {
        if (!std::filesystem::exists(f.config)) {
            throw MissingArtifactError("config file not found: " + f.config);
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(f.config));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("cannot parse config " + f.config + ": " + e.what());
        }
        rc = run_config_from_json(j, rc);
    }
    auto given = [&](const char* name) { return sub.count(name) > 0; };
    if (given("--seed")) {
        rc.seed = f.seed;
    }
    if (given("--city")) {
        rc.city = f.city;
    }
    if (given("--arms")) {
        rc.arms.clear();
        for (AblationArm a : parse_arms(f.arms)) {
            rc.arms.emplace_back(arm_name(a));
        }
    }
    if (given("--quantiles")) {
        rc.model.quantiles = rc.train.quantiles = parse_quantiles(f.quantiles);
    }
    if (given("--steps")) {
        rc.steps = f.steps;
    }
    if (given("--data")) {
        rc.data = f.data;
    }
    if (given("--checkpoint")) {
        rc.checkpoint = f.checkpoint;
    }
    if (given("--interp-checkpoint")) {
        rc.interp_checkpoint = f.interp_checkpoint;
    }
    if (given("--init")) {
        rc.inits = split_list(f.init);
    }
    if (given("--init-every")) {
        rc.init_every = f.init_every;
    }
    if (given("--forecast")) {
        rc.forecast = f.forecast;
    }
    if (given("--report")) {
        rc.report = f.report;
    }
    if (given("--epochs")) {
        rc.train.epochs = f.epochs;
    }
    if (given("--stride")) {
        rc.stride = f.stride;
    }
    if (command == "synth" && !rc.city.empty()) {
        rc.synth.city = rc.city;
    }
    rc.model.seed = rc.seed;
    rc.train.seed = rc.seed;
    if (given("--steps")) {
        rc.model.horizon_steps = rc.steps;
        rc.ablation.forecast_steps = rc.steps;
    }
    if (rc.steps == 0) {
        throw ValidationError("--steps must be at least 1");
    }
    rc.data = absolute_or_empty(rc.data);
    rc.checkpoint = absolute_or_empty(rc.checkpoint);
    rc.interp_checkpoint = absolute_or_empty(rc.interp_checkpoint);
    rc.forecast = absolute_or_empty(rc.forecast);
    rc.report = absolute_or_empty(rc.report);
    if (f.out.empty()) {
        throw ValidationError("--out is required");
    }
    rc.out = f.out;
    if (command == "synth") {
        validate(rc.synth);
    } else if (command == "gradcheck") {
        rc.model.validate();
    } else if (command == "train" || command == "train-interp" || command == "ablate") {
        rc.train.validate();
        if (rc.train.quantiles != rc.model.quantiles) {
            throw ValidationError("model and training quantiles differ");
        }
    }
    return rc;
}

void print_error(const char* kind, const std::string& message)
{
    nlohmann::ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

} // namespace

int run_cli(const std::vector<std::string>& args)
{
    CLI::App app{"aircast: coupled meteorology-emission-station air quality forecasting"};
    app.require_subcommand(1, 1);
    Flags f;
    struct Sub {
        std::string name;
        CLI::App* app;
    };
    std::vector<Sub> subs;
    const std::pair<const char*, const char*> commands[] = {
        {"synth", "generate a synthetic city dataset"},
        {"train", "train the 6-hour model"},
        {"train-interp", "train the hourly interpolation model"},
        {"forecast", "run 72-hour forecasts from checkpoints"},
        {"evaluate", "score a forecast file against observations"},
        {"ablate", "train and score the input ablation arms"},
        {"gradcheck", "compare backprop against finite differences"},
        {"plot", "write metric curves as CSV and SVG"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", f.config, "JSON config file");
        sub->add_option("--seed", f.seed, "master seed");
        sub->add_option("--out", f.out, "output directory")->required();
        sub->add_option("--city", f.city, "city name");
        sub->add_option("--arms", f.arms, "ablation arms, e.g. ALL,STN_ONLY");
        sub->add_option("--quantiles", f.quantiles, "quantile list, e.g. 0.1,0.5,0.9");
        sub->add_option("--steps", f.steps, "6-hour forecast steps");
        sub->add_option("--data", f.data, "dataset directory");
        sub->add_option("--checkpoint", f.checkpoint, "6-hour model checkpoint directory");
        sub->add_option("--interp-checkpoint", f.interp_checkpoint, "interpolation model checkpoint directory");
        sub->add_option("--init", f.init, "initialisation time(s), comma separated");
        sub->add_option("--init-every", f.init_every, "initialise every N hours across the dataset");
        sub->add_option("--forecast", f.forecast, "forecast CSV");
        sub->add_option("--report", f.report, "metrics report JSON");
        sub->add_option("--epochs", f.epochs, "training epochs");
        sub->add_option("--stride", f.stride, "window stride in hours");
        subs.push_back({name, sub});
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) {
        reversed.pop_back(); // program name
    }
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return 2;
    }

    std::string command;
    const CLI::App* sub = nullptr;
    for (const auto& s : subs) {
        if (s.app->parsed()) {
            command = s.name;
            sub = s.app;
        }
    }
    try {
        const RunConfig rc = resolve(command, f, *sub);
        std::filesystem::create_directories(rc.out);
        log::set_file(rc.out / "run.log");
        write_json(rc.out / "run_config.json", rc.to_json());
        log::info("aircast " + command);
        if (command == "synth") {
            cmd_synth(rc);
        } else if (command == "train") {
            cmd_train(rc, ModelKind::SixHour);
        } else if (command == "train-interp") {
            cmd_train(rc, ModelKind::Interpolator);
        } else if (command == "forecast") {
            cmd_forecast(rc);
        } else if (command == "evaluate") {
            cmd_evaluate(rc);
        } else if (command == "ablate") {
            cmd_ablate(rc);
        } else if (command == "gradcheck") {
            cmd_gradcheck(rc);
        } else if (command == "plot") {
            cmd_plot(rc);
        }
        log::set_file({});
        return 0;
    } catch (const Error& e) {
        log::error(e.what());
        log::set_file({});
        print_error(e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        log::error(e.what());
        log::set_file({});
        print_error("internal", e.what());
        return 1;
    }
}

int run_cli(int argc, const char* const* argv)
{
    return run_cli(std::vector<std::string>(argv, argv + argc));
}

} // namespace aircast
