#include "aircast/evaluation.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"
#include "aircast/log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace aircast {

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string window_label(std::size_t w)
{
    return std::to_string(kLeadWindows[w].first) + "-" + std::to_string(kLeadWindows[w].second);
}

} // namespace

nlohmann::ordered_json Metrics::to_json() const
{
    nlohmann::ordered_json j;
    j["R"] = optional_json(r);
    j["RMSE"] = rmse;
    j["rRMSE"] = optional_json(rrmse);
    j["MRE"] = optional_json(mre);
    j["MAE"] = mae;
    j["n_pairs"] = n_pairs;
    j["mre_excluded"] = mre_excluded;
    return j;
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> obs)
{
    if (pred.size() != obs.size()) {
        throw ValidationError("prediction and observation series differ in length (" + std::to_string(pred.size())
                              + " vs " + std::to_string(obs.size()) + ")");
    }
    std::vector<double> p, o;
    p.reserve(pred.size());
    o.reserve(obs.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::isfinite(pred[i]) && std::isfinite(obs[i])) {
            p.push_back(pred[i]);
            o.push_back(obs[i]);
        }
    }
    const std::size_t n = p.size();
    if (n < 2) {
        throw ValidationError("metrics need at least 2 valid pairs, got " + std::to_string(n));
    }
    const double nd = static_cast<double>(n);
    double p_mean = 0.0, o_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p_mean += p[i];
        o_mean += o[i];
    }
    p_mean /= nd;
    o_mean /= nd;

    double cov = 0.0, var_p = 0.0, var_o = 0.0, sq = 0.0, abs_sum = 0.0, rel_sum = 0.0;
    std::size_t rel_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = p[i] - p_mean;
        const double d_o = o[i] - o_mean;
        cov += dp * d_o;
        var_p += dp * dp;
        var_o += d_o * d_o;
        const double e = p[i] - o[i];
        sq += e * e;
        abs_sum += std::abs(e);
        if (o[i] != 0.0) {
            rel_sum += std::abs(e / o[i]);
            ++rel_n;
        }
    }
    Metrics m;
    m.n_pairs = n;
    m.mre_excluded = n - rel_n;
    if (var_p > 0.0 && var_o > 0.0) {
        m.r = cov / (std::sqrt(var_p) * std::sqrt(var_o));
    }
    m.rmse = std::sqrt(sq / nd);
    if (o_mean != 0.0) {
        m.rrmse = m.rmse / o_mean;
    }
    if (rel_n > 0) {
        m.mre = rel_sum / static_cast<double>(rel_n);
    }
    m.mae = abs_sum / nd;
    return m;
}

nlohmann::ordered_json MetricsReport::to_json() const
{
    nlohmann::ordered_json j;
    j["label"] = label;
    j["bundles"] = bundles;
    j["lead_hours"] = lead_hours;
    nlohmann::ordered_json pollutants;
    for (std::size_t p = 0; p < kPollutants; ++p) {
        nlohmann::ordered_json entry;
        entry["per_hour"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < lead_hours.size(); ++i) {
            nlohmann::ordered_json row;
            row["lead_hour"] = lead_hours[i];
            row["metrics"] = per_hour[p][i] ? per_hour[p][i]->to_json() : nlohmann::ordered_json(nullptr);
            entry["per_hour"].push_back(std::move(row));
        }
        entry["windows"] = nlohmann::ordered_json::array();
        for (std::size_t w = 0; w < kLeadWindows.size(); ++w) {
            nlohmann::ordered_json row;
            row["window"] = window_label(w);
            row["metrics"] = windows[p][w] ? windows[p][w]->to_json() : nlohmann::ordered_json(nullptr);
            entry["windows"].push_back(std::move(row));
        }
        pollutants[std::string(kPollutantNames[p])] = std::move(entry);
    }
    j["pollutants"] = std::move(pollutants);
    return j;
}

namespace {

void csv_rows(std::ostringstream& os, std::string_view pollutant, const std::string& lead,
              const std::optional<Metrics>& m)
{
    const std::pair<const char*, std::optional<double>> values[] = {
        {"R", m ? m->r : std::nullopt},
        {"RMSE", m ? std::optional<double>(m->rmse) : std::nullopt},
        {"rRMSE", m ? m->rrmse : std::nullopt},
        {"MRE", m ? m->mre : std::nullopt},
        {"MAE", m ? std::optional<double>(m->mae) : std::nullopt},
    };
    for (const auto& [name, v] : values) {
        os << pollutant << ',' << lead << ',' << name << ',' << (v ? format_double(*v) : "") << ','
           << (m ? m->n_pairs : 0) << '\n';
    }
}

} // namespace

std::string MetricsReport::to_csv() const
{
    std::ostringstream os;
    os << "pollutant,lead_hour,metric,value,n_pairs\n";
    for (std::size_t p = 0; p < kPollutants; ++p) {
        for (std::size_t i = 0; i < lead_hours.size(); ++i) {
            csv_rows(os, kPollutantNames[p], std::to_string(lead_hours[i]), per_hour[p][i]);
        }
        for (std::size_t w = 0; w < kLeadWindows.size(); ++w) {
            csv_rows(os, kPollutantNames[p], window_label(w), windows[p][w]);
        }
    }
    return os.str();
}

namespace {

std::optional<double> optional_from(const nlohmann::json& j, const char* key)
{
    const auto& v = j.at(key);
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}

std::optional<Metrics> metrics_from(const nlohmann::json& j)
{
    if (j.is_null()) {
        return std::nullopt;
    }
    Metrics m;
    m.r = optional_from(j, "R");
    m.rmse = j.at("RMSE").get<double>();
    m.rrmse = optional_from(j, "rRMSE");
    m.mre = optional_from(j, "MRE");
    m.mae = j.at("MAE").get<double>();
    m.n_pairs = j.at("n_pairs").get<std::size_t>();
    m.mre_excluded = j.at("mre_excluded").get<std::size_t>();
    return m;
}

} // namespace

MetricsReport metrics_report_from_json(const nlohmann::json& j)
{
    try {
        MetricsReport r;
        r.label = j.at("label").get<std::string>();
        r.bundles = j.at("bundles").get<std::size_t>();
        r.lead_hours = j.at("lead_hours").get<std::vector<int>>();
        const auto& pollutants = j.at("pollutants");
        for (std::size_t p = 0; p < kPollutants; ++p) {
            const auto& entry = pollutants.at(std::string(kPollutantNames[p]));
            const auto& rows = entry.at("per_hour");
            if (rows.size() != r.lead_hours.size()) {
                throw ValidationError("metrics report: per-hour rows do not match lead_hours");
            }
            for (const auto& row : rows) {
                r.per_hour[p].push_back(metrics_from(row.at("metrics")));
            }
            const auto& windows = entry.at("windows");
            for (std::size_t w = 0; w < kLeadWindows.size() && w < windows.size(); ++w) {
                r.windows[p][w] = metrics_from(windows[w].at("metrics"));
            }
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed metrics report: ") + e.what());
    }
}

MetricsReport window_report(const std::vector<ForecastBundle>& forecasts, const PreparedCity& city,
                            std::string label)
{
    if (forecasts.empty()) {
        throw ValidationError("window report needs at least one forecast bundle");
    }
    const CityDataset& data = *city.data;
    std::map<std::string, std::size_t> station_index;
    for (std::size_t s = 0; s < data.series.size(); ++s) {
        station_index[data.series[s].station.id] = s;
    }
    using Pairs = std::pair<std::vector<double>, std::vector<double>>;
    std::array<std::map<int, Pairs>, kPollutants> hourly;
    std::array<std::array<Pairs, kLeadWindows.size()>, kPollutants> pooled;
    std::set<int> hours;
    std::size_t total = 0;

    for (const auto& b : forecasts) {
        auto med = std::find(b.quantiles.begin(), b.quantiles.end(), 0.5);
        if (med == b.quantiles.end()) {
            throw ValidationError("forecast bundle at " + format_hour(b.init_time) + " has no 0.5 quantile");
        }
        const auto q = static_cast<std::size_t>(med - b.quantiles.begin());
        const std::size_t nq = b.quantiles.size();
        for (std::size_t i = 0; i < b.lead_hours.size(); ++i) {
            const int h = b.lead_hours[i];
            hours.insert(h);
            const std::int64_t t = hours_between(data.start, b.init_time + std::chrono::hours(h));
            if (t < 0 || static_cast<std::size_t>(t) >= data.hours) {
                continue;
            }
            const auto ti = static_cast<std::size_t>(t);
            for (std::size_t s = 0; s < b.station_ids.size(); ++s) {
                auto it = station_index.find(b.station_ids[s]);
                if (it == station_index.end()) {
                    throw ValidationError("forecast station '" + b.station_ids[s] + "' is not part of city "
                                          + data.city);
                }
                const StationSeries& series = data.series[it->second];
                for (std::size_t p = 0; p < kPollutants; ++p) {
                    if (!series.is_valid(ti, p)) {
                        continue;
                    }
                    const double pred = b.frames[i][(s * kPollutants + p) * nq + q];
                    const double obs = series.value(ti, p);
                    auto& hp = hourly[p][h];
                    hp.first.push_back(pred);
                    hp.second.push_back(obs);
                    for (std::size_t w = 0; w < kLeadWindows.size(); ++w) {
                        if (h >= kLeadWindows[w].first && h <= kLeadWindows[w].second) {
                            pooled[p][w].first.push_back(pred);
                            pooled[p][w].second.push_back(obs);
                        }
                    }
                    ++total;
                }
            }
        }
    }
    if (total == 0) {
        throw ValidationError("forecasts do not overlap the observations of city " + data.city);
    }
    MetricsReport r;
    r.label = std::move(label);
    r.bundles = forecasts.size();
    r.lead_hours.assign(hours.begin(), hours.end());
    auto score = [](const Pairs& pairs) -> std::optional<Metrics> {
        if (pairs.first.size() < 2) {
            return std::nullopt;
        }
        return compute_metrics(pairs.first, pairs.second);
    };
    for (std::size_t p = 0; p < kPollutants; ++p) {
        for (int h : r.lead_hours) {
            auto it = hourly[p].find(h);
            r.per_hour[p].push_back(it == hourly[p].end() ? std::nullopt : score(it->second));
        }
        for (std::size_t w = 0; w < kLeadWindows.size(); ++w) {
            r.windows[p][w] = score(pooled[p][w]);
        }
    }
    return r;
}

std::string_view arm_name(AblationArm arm)
{
    switch (arm) {
    case AblationArm::All: return "ALL";
    case AblationArm::DeMet: return "DEMET";
    case AblationArm::DeEms: return "DEEMS";
    case AblationArm::StnOnly: return "STN_ONLY";
    }
    return "ALL";
}

AblationArm parse_arm(std::string_view name)
{
    for (AblationArm a : {AblationArm::All, AblationArm::DeMet, AblationArm::DeEms, AblationArm::StnOnly}) {
        if (arm_name(a) == name) {
            return a;
        }
    }
    throw ValidationError("unknown ablation arm '" + std::string(name) + "' (expected ALL, DEMET, DEEMS, STN_ONLY)");
}

std::vector<AblationArm> parse_arms(std::string_view list)
{
    std::vector<AblationArm> arms;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const std::size_t comma = std::min(list.find(',', pos), list.size());
        const std::string_view item = list.substr(pos, comma - pos);
        if (!item.empty()) {
            const AblationArm a = parse_arm(item);
            if (std::find(arms.begin(), arms.end(), a) != arms.end()) {
                throw ValidationError("ablation arm '" + std::string(item) + "' listed twice");
            }
            arms.push_back(a);
        }
        pos = comma + 1;
    }
    if (arms.empty()) {
        throw ValidationError("no ablation arms given");
    }
    return arms;
}

InputMask AblationSpec::mask() const
{
    switch (arm) {
    case AblationArm::All: return {true, true};
    case AblationArm::DeMet: return {false, true};
    case AblationArm::DeEms: return {true, false};
    case AblationArm::StnOnly: return {false, false};
    }
    return {};
}

nlohmann::ordered_json AblationResult::to_json() const
{
    nlohmann::ordered_json j;
    j["exp_id"] = arm_name(arm);
    j["heldout_rmse"] = heldout_rmse;
    j["heldout_windows"] = heldout_windows;
    j["train"] = train.to_json();
    j["report"] = report.to_json();
    return j;
}

void AblationSetup::validate() const
{
    std::vector<std::string> bad;
    if (window_stride == 0) {
        bad.emplace_back("window_stride must be positive");
    }
    if (block_hours < 13) {
        bad.emplace_back("block_hours must be at least 13");
    }
    if (holdout_every < 2) {
        bad.emplace_back("holdout_every must be at least 2");
    }
    if (forecast_stride == 0 || forecast_steps == 0) {
        bad.emplace_back("forecast_stride and forecast_steps must be positive");
    }
    if (!bad.empty()) {
        std::string msg = "invalid ablation setup:";
        for (const auto& b : bad) {
            msg += " " + b + ";";
        }
        throw ValidationError(msg);
    }
}

bool is_heldout_hour(std::size_t hour, const AblationSetup& setup)
{
    return (hour / setup.block_hours) % setup.holdout_every == setup.holdout_every - 1;
}

double one_step_rmse(const ForecastModel& model, const std::vector<TrainingSample>& samples)
{
    if (samples.empty()) {
        throw ValidationError("no held-out windows to score");
    }
    const std::size_t median = model.config().median_index();
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        const Tensor med = quantile_slice(step_forecast(model, s.inputs), median);
        for (std::size_t i = 0; i < med.size(); ++i) {
            const double e = med[i] - s.target[i];
            sq += e * e;
            ++n;
        }
    }
    return std::sqrt(sq / static_cast<double>(n));
}

AblationResult run_ablation(const AblationSpec& spec, const PreparedCity& city, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, const AblationSetup& setup)
{
    setup.validate();
    const WindowSet ws = build_windows(city, setup.window_stride, WindowKind::SixHour);
    std::vector<SampleWindow> train_w, test_w;
    for (const auto& w : ws.windows) {
        const auto idx = static_cast<std::size_t>(hours_between(city.data->start, w.anchor));
        std::size_t held = 0;
        for (std::size_t h = idx - 6; h <= idx + 6; ++h) {
            held += is_heldout_hour(h, setup) ? 1 : 0;
        }
        if (held == 0) {
            train_w.push_back(w);
        } else if (held == 13) {
            test_w.push_back(w);
        }
    }
    if (train_w.empty() || test_w.empty()) {
        throw ValidationError("ablation split leaves " + std::to_string(train_w.size()) + " training and "
                              + std::to_string(test_w.size()) + " held-out windows");
    }
    const InputMask mask = spec.mask();
    log::info("ablation " + std::string(arm_name(spec.arm)) + ": " + std::to_string(train_w.size()) + " train, "
              + std::to_string(test_w.size()) + " held-out windows");
    TrainResult trained = train_6h(make_samples(city, train_w, mask), model_config_for(city, mcfg), tcfg);

    AblationResult r;
    r.arm = spec.arm;
    r.train = trained.report;
    const auto test_samples = make_samples(city, test_w, mask);
    r.heldout_rmse = one_step_rmse(trained.model, test_samples);
    r.heldout_windows = test_samples.size();

    std::vector<ForecastBundle> bundles;
    const std::size_t span = 6 * setup.forecast_steps;
    const std::size_t hours = city.data->hours;
    for (std::size_t b0 = (setup.holdout_every - 1) * setup.block_hours; b0 < hours;
         b0 += setup.holdout_every * setup.block_hours) {
        const std::size_t b1 = std::min(hours, b0 + setup.block_hours);
        for (std::size_t t0 = b0 + 6; t0 + span < b1; t0 += setup.forecast_stride) {
            const Hour init = city.data->start + std::chrono::hours(t0);
            try {
                bundles.push_back(forecast_6h(trained.model, city, init, setup.forecast_steps, mask));
            } catch (const ValidationError& e) {
                log::debug(std::string("skipping initialisation: ") + e.what());
            }
        }
    }
    if (bundles.empty()) {
        throw ValidationError("held-out blocks are too short for a " + std::to_string(span) + "-hour forecast");
    }
    r.report = window_report(bundles, city, std::string(arm_name(spec.arm)));
    return r;
}

} // namespace aircast
