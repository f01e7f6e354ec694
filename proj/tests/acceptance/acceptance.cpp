// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include "aircast/cli.hpp"
#include "aircast/error.hpp"
#include "aircast/evaluation.hpp"
#include "aircast/forecaster.hpp"
#include "aircast/io.hpp"
#include "aircast/rng.hpp"
#include "aircast/synth.hpp"
#include "aircast/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

using namespace aircast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v)
{
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

bool quantiles_sorted(const Tensor& t, std::size_t q)
{
    for (std::size_t i = 0; i < t.size(); i += q) {
        for (std::size_t k = 1; k < q; ++k) {
            if (t[i + k - 1] > t[i + k]) {
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Shared synthetic study: a 12-station city over 120 days with weekly blocks,
// every fifth one held out.

SynthConfig study_synth()
{
    SynthConfig c;
    c.city = "study";
    c.n_stations = 12;
    c.n_lat = 8;
    c.n_lon = 8;
    c.resolution = 0.15;
    c.days = 120;
    c.start = "2023-01-01T00:00:00Z";
    c.met_channels = {"T2M", "U10M", "V10M", "U100M", "V100M"};
    c.emission_influence = 6.0;
    c.met_influence = 0.6;
    return c;
}

ModelConfig study_model()
{
    ModelConfig m;
    m.d_model = 16;
    m.temb_dim = 4;
    m.mlp_hidden = 32;
    m.resnet_depth = 1;
    m.resnet_width = 8;
    return m;
}

TrainConfig study_train(std::size_t epochs)
{
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 16;
    t.lr = 2e-3;
    t.val_fraction = 0.1;
    t.freeze_doy = true;
    return t;
}

AblationSetup study_setup()
{
    AblationSetup s;
    s.window_stride = 1;
    s.block_hours = 168;
    s.holdout_every = 5;
    return s;
}

const PreparedCity& study_city()
{
    static const PreparedCity city = prepare_city(std::make_shared<const CityDataset>(synth_generate(study_synth(), 1)));
    return city;
}

// Windows whose hours avoid the held-out blocks entirely, and windows lying inside them.
struct Split {
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> test;
};

Split split_windows(const PreparedCity& city, WindowKind kind, std::size_t stride)
{
    const AblationSetup setup = study_setup();
    const int lo = kind == WindowKind::SixHour ? -6 : 0;
    Split s;
    for (auto& w : build_windows(city, stride, kind).windows) {
        const auto idx = hours_between(city.data->start, w.anchor);
        int held = 0;
        for (auto h = idx + lo; h <= idx + 6; ++h) {
            held += is_heldout_hour(static_cast<std::size_t>(h), setup) ? 1 : 0;
        }
        if (held == 0) {
            s.train.push_back(std::move(w));
        } else if (held == 7 - lo) {
            s.test.push_back(std::move(w));
        }
    }
    return s;
}

// Same city with stronger, longer-lived noise, so the initial state matters for the first day or so.
const PreparedCity& persistent_city()
{
    static const PreparedCity city = [] {
        SynthConfig c = study_synth();
        c.noise_amplitude = 2.5;
        c.noise_persistence = 0.95;
        return prepare_city(std::make_shared<const CityDataset>(synth_generate(c, 1)));
    }();
    return city;
}

ForecastModel train_six_hour(const PreparedCity& city)
{
    const Split s = split_windows(city, WindowKind::SixHour, 1);
    ModelConfig m = model_config_for(city, study_model());
    m.seed = 101;
    TrainConfig t = study_train(20);
    t.seed = 101;
    return train_6h(make_samples(city, s.train), m, t).model;
}

const ForecastModel& study_six_hour()
{
    static const ForecastModel model = train_six_hour(study_city());
    return model;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity()
{
    const auto t0 = std::chrono::steady_clock::now();
    const GradientReport r = verify_gradients(micro_model_config(), 7);
    const double secs = seconds_since(t0);
    std::size_t elements = 0;
    for (const auto& t : r.tensors) {
        elements += t.elements;
    }
    return {r.max_rel_error <= 1e-4 && secs < 60.0,
            fmt("%zu tensors, %zu elements, max rel err %.3e (<= 1e-4), %.1f s (< 60 s)", r.tensors.size(), elements,
                r.max_rel_error, secs)};
}

Outcome attention_invariants()
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> n_dist(2, 7), g_dist(2, 5);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto random = [&](Shape s) {
        Tensor t(std::move(s));
        for (double& v : t.data()) {
            v = nd(rng);
        }
        return t;
    };
    double worst_row = 0.0, worst_perm = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        ModelConfig c;
        c.d_model = inst % 2 == 0 ? 8 : 4;
        c.temb_dim = 4;
        c.mlp_hidden = 12;
        c.resnet_depth = 1 + inst % 2;
        c.resnet_width = 4;
        c.met_channels = 2;
        c.ems_channels = 1;
        c.stations = n_dist(rng);
        c.n_lat = g_dist(rng);
        c.n_lon = g_dist(rng);
        c.seed = static_cast<std::uint64_t>(inst);
        const ForecastModel model(c, inst % 3 == 0 ? ModelKind::Interpolator : ModelKind::SixHour);
        const std::size_t n = c.stations;
        ModelInputs in{random({n, 6}), random({n, 6}), random({n, 4}), random({c.grid_channels(), c.n_lat, c.n_lon}),
                       TimeCode{static_cast<int>(1 + inst * 3), inst % 24}};
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ModelInputs pin = in;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                pin.x_prev.at(i, j) = in.x_prev.at(perm[i], j);
                pin.x_curr.at(i, j) = in.x_curr.at(perm[i], j);
            }
            for (std::size_t j = 0; j < 4; ++j) {
                pin.site_pe.at(i, j) = in.site_pe.at(perm[i], j);
            }
        }
        nn::Graph g(false);
        const ModelOutputs a = model.forward(g, in);
        const ModelOutputs b = model.forward(g, pin);
        const Tensor& sa = a.site_attention.value();
        const Tensor& ca = a.cross_attention.value();
        for (const Tensor* att : {&sa, &ca, &b.site_attention.value(), &b.cross_attention.value()}) {
            const std::size_t cols = att->dim(1);
            for (std::size_t i = 0; i < att->dim(0); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    sum += att->at(i, j);
                }
                worst_row = std::max(worst_row, std::abs(sum - 1.0));
            }
        }
        const Tensor& pa = a.prediction.value();
        const Tensor& pb = b.prediction.value();
        const std::size_t row = pa.size() / n;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < row; ++k) {
                worst_perm = std::max(worst_perm, std::abs(pb[i * row + k] - pa[perm[i] * row + k]));
            }
            for (std::size_t j = 0; j < n; ++j) {
                worst_perm = std::max(worst_perm, std::abs(b.site_attention.value().at(i, j) - sa.at(perm[i], perm[j])));
            }
            for (std::size_t j = 0; j < ca.dim(1); ++j) {
                worst_perm = std::max(worst_perm, std::abs(b.cross_attention.value().at(i, j) - ca.at(perm[i], j)));
            }
        }
    }
    return {worst_row <= 1e-9 && worst_perm <= 1e-9,
            fmt("100 instances: max |row sum - 1| %.2e, max permutation deviation %.2e (<= 1e-9)", worst_row,
                worst_perm)};
}

Outcome metric_oracle()
{
    auto rel = [](double a, long double b) {
        return static_cast<double>(std::abs(static_cast<long double>(a) - b)
                                   / std::max(std::abs(b), static_cast<long double>(1e-300)));
    };
    // Worked example, hand-evaluated.
    const std::vector<double> p0{2, 2, 4}, o0{1, 2, 3};
    const Metrics w = compute_metrics(p0, o0);
    double worked = 0.0;
    worked = std::max(worked, rel(w.mae, 2.0L / 3.0L));
    worked = std::max(worked, rel(w.rmse, std::sqrt(2.0L / 3.0L)));
    worked = std::max(worked, rel(*w.rrmse, std::sqrt(2.0L / 3.0L) / 2.0L));
    worked = std::max(worked, rel(*w.mre, (1.0L + 0.0L + 1.0L / 3.0L) / 3.0L));
    worked = std::max(worked, rel(*w.r, 2.0L / std::sqrt(2.0L * 24.0L / 9.0L)));

    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> len(2, 300);
    std::uniform_real_distribution<double> level(0.5, 200.0), noise(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = len(rng);
        const double scale = level(rng);
        std::vector<double> p(n), o(n);
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = scale * (1.0 + 0.9 * noise(rng));
            p[i] = o[i] + scale * 0.5 * noise(rng);
        }
        long double sp = 0, so = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sp += p[i];
            so += o[i];
        }
        const long double mp = sp / n, mo = so / n;
        long double cov = 0, vp = 0, vo = 0, sq = 0, ab = 0, re = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const long double dp = p[i] - mp, dob = o[i] - mo, e = static_cast<long double>(p[i]) - o[i];
            cov += dp * dob;
            vp += dp * dp;
            vo += dob * dob;
            sq += e * e;
            ab += std::abs(e);
            re += std::abs(e) / o[i];
        }
        const long double rmse = std::sqrt(sq / n);
        const Metrics m = compute_metrics(p, o);
        worst = std::max({worst, rel(*m.r, cov / std::sqrt(vp * vo)), rel(m.rmse, rmse), rel(*m.rrmse, rmse / mo),
                          rel(*m.mre, re / n), rel(m.mae, ab / n)});
    }
    return {worked <= 1e-10 && worst <= 1e-10,
            fmt("worked example max rel err %.2e, 1000 random pairs max rel err %.2e (<= 1e-10)", worked, worst)};
}

Outcome dual_scale_contract()
{
    SynthConfig sc;
    sc.n_stations = 4;
    sc.n_lat = 6;
    sc.n_lon = 6;
    sc.resolution = 0.2;
    sc.days = 10;
    sc.met_channels = {"T2M", "U10M", "V10M"};
    sc.ems_channels = {"NOx", "SO2"};
    const PreparedCity city = prepare_city(std::make_shared<const CityDataset>(synth_generate(sc, 3)));
    ModelConfig mc = study_model();
    mc.seed = 5;
    mc = model_config_for(city, mc);
    const ForecastModel six(mc, ModelKind::SixHour);
    const ForecastModel interp(mc, ModelKind::Interpolator);
    const Hour t0 = city.data->start + std::chrono::hours(30);

    const ForecastBundle hourly = hourly_forecast(six, interp, city, t0, 12);
    const ForecastBundle coarse = forecast_6h(six, city, t0, 12);
    std::vector<int> expected(72);
    std::iota(expected.begin(), expected.end(), 1);
    const bool frames_ok = hourly.frames.size() == 72 && hourly.lead_hours == expected;
    bool bitwise = coarse.frames.size() == 12;
    for (std::size_t k = 0; bitwise && k < 12; ++k) {
        bitwise = hourly.frames[6 * k + 5] == coarse.frames[k];
    }
    const RolloutInputs ri = rollout_inputs(city, t0, 12);
    const auto full = rollout(six, ri, 12);
    bool prefix = true;
    for (std::size_t k : {1, 3, 6, 12}) {
        const auto part = rollout(six, ri, k);
        prefix = prefix && part.size() == k && std::equal(part.begin(), part.end(), full.begin());
    }
    return {frames_ok && bitwise && prefix,
            fmt("%zu hourly frames, 6-hourly frames bitwise equal: %s, prefixes k=1,3,6,12 hold: %s", hourly.frames.size(),
                bitwise ? "yes" : "no", prefix ? "yes" : "no")};
}

Outcome quantile_behaviour()
{
    const std::vector<double> taus5{0.5}, taus9{0.9};
    auto loss = [](double pred, double obs, const std::vector<double>& taus) {
        return quantile_loss(Tensor({1, 1}, {pred}), Tensor({1}, {obs}), taus);
    };
    double worst = 0.0;
    worst = std::max(worst, std::abs(loss(3.0, 5.0, taus5) - 1.0));   // half the absolute error
    worst = std::max(worst, std::abs(loss(7.0, 5.0, taus5) - 1.0));
    worst = std::max(worst, std::abs(loss(3.0, 5.0, taus9) - 1.8));   // under-prediction weighs 0.9
    worst = std::max(worst, std::abs(loss(7.0, 5.0, taus9) - 0.2));   // over-prediction weighs 0.1
    worst = std::max(worst, std::abs(loss(5.0, 5.0, taus9)));

    // Held-out coverage of the [q10, q90] band from the trained study model.
    const PreparedCity& city = study_city();
    const ForecastModel& model = study_six_hour();
    const Split s = split_windows(city, WindowKind::SixHour, 1);
    std::size_t inside = 0, total = 0;
    bool sorted = true;
    for (const auto& sample : make_samples(city, s.test)) {
        const Tensor pred = step_forecast(model, sample.inputs);
        sorted = sorted && quantiles_sorted(pred, 3);
        for (std::size_t i = 0; i < sample.target.size(); ++i) {
            const double y = sample.target[i];
            inside += pred[3 * i] <= y && y <= pred[3 * i + 2] ? 1 : 0;
            ++total;
        }
    }
    // Every emitted bundle, hourly included.
    const ForecastModel interp(model.config(), ModelKind::Interpolator);
    for (std::size_t t = 6 + 4 * 168; t + 72 < 5 * 168; t += 24) {
        const ForecastBundle b = hourly_forecast(model, interp, city, city.data->start + std::chrono::hours(t), 12);
        for (const auto& f : b.frames) {
            sorted = sorted && quantiles_sorted(f, 3);
        }
    }
    const double coverage = static_cast<double>(inside) / static_cast<double>(total);
    return {worst <= 1e-12 && sorted && coverage >= 0.60 && coverage <= 0.95,
            fmt("pinball examples max err %.1e, quantiles ordered: %s, held-out [q10, q90] coverage %.1f%% over %zu "
                "values (60-95%%)",
                worst, sorted ? "yes" : "no", 100.0 * coverage, total)};
}

Outcome overfit_check()
{
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.n_stations = 4;
    sc.n_lat = 6;
    sc.n_lon = 6;
    sc.resolution = 0.2;
    sc.days = 10;
    sc.met_channels = {"T2M", "U10M", "V10M"};
    sc.ems_channels = {"NOx", "SO2"};
    const PreparedCity city = prepare_city(std::make_shared<const CityDataset>(synth_generate(sc, 9)));
    auto windows = build_windows(city, 6, WindowKind::SixHour).windows;
    windows.resize(8);
    const auto samples = make_samples(city, windows);
    ModelConfig mc = study_model();
    mc.seed = 17;
    mc = model_config_for(city, mc);
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 8;
    tc.lr = 1e-2;
    tc.val_fraction = 0.0;
    tc.seed = 17;
    const TrainResult a = train_6h(samples, mc, tc);
    const TrainResult b = train_6h(samples, mc, tc);
    const double final_loss = evaluate_loss(a.model, samples);
    const double ratio = final_loss / a.report.initial_train_loss;
    bool same = a.report.to_json() == b.report.to_json();
    for (std::size_t i = 0; same && i < a.model.params().size(); ++i) {
        same = a.model.params()[i].value == b.model.params()[i].value;
    }
    const double secs = seconds_since(t0);
    return {ratio <= 0.10 && same && secs < 300.0,
            fmt("8 windows, 200 epochs: loss %.4f -> %.4f (%.1f%% of initial, <= 10%%), repeat bitwise identical: %s, "
                "%.1f s for both runs (< 300 s)",
                a.report.initial_train_loss, final_loss, 100.0 * ratio, same ? "yes" : "no", secs)};
}

Outcome ablation_ordering()
{
    const auto t0 = std::chrono::steady_clock::now();
    const PreparedCity& city = study_city();
    const std::vector<AblationArm> arms = parse_arms("ALL,DEMET,DEEMS,STN_ONLY");
    std::map<AblationArm, std::vector<double>> rmse;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        for (AblationArm arm : arms) {
            const std::uint64_t s = substream_seed(seed, "ablation." + std::string(arm_name(arm)));
            ModelConfig m = study_model();
            m.seed = s;
            TrainConfig t = study_train(20);
            t.seed = s;
            rmse[arm].push_back(run_ablation({arm}, city, m, t, study_setup()).heldout_rmse);
        }
    }
    const double secs = seconds_since(t0);
    std::string detail;
    for (AblationArm arm : arms) {
        detail += fmt("%s %.4f+-%.4f, ", std::string(arm_name(arm)).c_str(), mean(rmse[arm]), sample_std(rmse[arm]));
    }
    // A gap counts when it exceeds twice the pooled standard deviation of the two arms.
    bool ok = true;
    auto gap = [&](AblationArm lo, AblationArm hi) {
        const double d = mean(rmse[hi]) - mean(rmse[lo]);
        const double sd = std::sqrt(0.5 * (std::pow(sample_std(rmse[lo]), 2) + std::pow(sample_std(rmse[hi]), 2)));
        ok = ok && d > 2.0 * sd;
        detail += fmt("%s<%s by %.1f sd, ", std::string(arm_name(lo)).c_str(), std::string(arm_name(hi)).c_str(),
                      sd > 0.0 ? d / sd : INFINITY);
    };
    gap(AblationArm::All, AblationArm::DeEms);
    gap(AblationArm::DeEms, AblationArm::StnOnly);
    gap(AblationArm::All, AblationArm::DeMet);
    gap(AblationArm::DeMet, AblationArm::StnOnly);
    detail += fmt("%.0f s (< 1800 s)", secs);
    return {ok && secs < 1800.0, detail};
}

Outcome error_growth()
{
    const PreparedCity& city = persistent_city();
    const ForecastModel model = train_six_hour(city);
    const AblationSetup setup = study_setup();
    std::vector<double> sq(12, 0.0);
    std::vector<std::size_t> count(12, 0);
    std::size_t inits = 0;
    for (std::size_t b0 = (setup.holdout_every - 1) * setup.block_hours; b0 < city.data->hours;
         b0 += setup.holdout_every * setup.block_hours) {
        const std::size_t b1 = std::min(city.data->hours, b0 + setup.block_hours);
        for (std::size_t t = b0 + 6; t + 72 < b1; t += 6) {
            const auto frames = rollout(model, rollout_inputs(city, city.data->start + std::chrono::hours(t), 12), 12);
            ++inits;
            for (std::size_t k = 0; k < 12; ++k) {
                const auto obs = city.frame(static_cast<std::int64_t>(t + 6 * (k + 1)));
                if (!obs) {
                    continue;
                }
                const Tensor med = quantile_slice(frames[k], model.config().median_index());
                for (std::size_t i = 0; i < med.size(); ++i) {
                    sq[k] += (med[i] - (*obs)[i]) * (med[i] - (*obs)[i]);
                    ++count[k];
                }
            }
        }
    }
    std::vector<double> r(12);
    for (std::size_t k = 0; k < 12; ++k) {
        r[k] = std::sqrt(sq[k] / static_cast<double>(count[k]));
    }
    const double early = r[5] - r[0];
    const double late = r[11] - r[6];
    std::string curve;
    for (double v : r) {
        curve += fmt("%.3f ", v);
    }
    return {inits >= 20 && r[11] >= r[0] && late < early,
            fmt("%zu initialisations, RMSE by step: %s| step 12 >= step 1: %s, rise over 7-12 %.4f < rise over 1-6 %.4f",
                inits, curve.c_str(), r[11] >= r[0] ? "yes" : "no", late, early)};
}

Outcome interpolator_value()
{
    const PreparedCity& city = study_city();
    const Split s = split_windows(city, WindowKind::Interpolation, 2);
    const auto train = make_samples(city, s.train);
    const auto test = make_samples(city, s.test);
    // Straight line between the two known frames.
    double lin_sq = 0.0;
    std::size_t n = 0;
    for (const auto& sample : test) {
        const std::size_t stations = sample.inputs.x_prev.dim(0);
        for (std::size_t st = 0; st < stations; ++st) {
            for (std::size_t j = 0; j < 5; ++j) {
                for (std::size_t p = 0; p < 6; ++p) {
                    const double a = sample.inputs.x_prev.at(st, p);
                    const double b = sample.inputs.x_curr.at(st, p);
                    const double lin = a + (b - a) * static_cast<double>(j + 1) / 6.0;
                    const double y = sample.target[(st * 5 + j) * 6 + p];
                    lin_sq += (lin - y) * (lin - y);
                    ++n;
                }
            }
        }
    }
    const double lin_rmse = std::sqrt(lin_sq / static_cast<double>(n));
    bool ok = true;
    std::string detail = fmt("linear baseline %.4f, interpolator", lin_rmse);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ModelConfig m = model_config_for(city, study_model());
        m.seed = substream_seed(seed, "interp");
        TrainConfig t = study_train(20);
        t.seed = m.seed;
        const TrainResult r = train_interp(train, m, t);
        double sq = 0.0;
        for (const auto& sample : test) {
            const ModelInputs& in = sample.inputs;
            const Tensor frames = interpolate_frames(r.model, in.x_prev, in.x_curr, in.site_pe, in.grid, in.timecode);
            const std::size_t stations = in.x_prev.dim(0);
            for (std::size_t j = 0; j < 5; ++j) {
                for (std::size_t st = 0; st < stations; ++st) {
                    for (std::size_t p = 0; p < 6; ++p) {
                        const double e = frames[((j * stations + st) * 6 + p) * 3 + 1] - sample.target[(st * 5 + j) * 6 + p];
                        sq += e * e;
                    }
                }
            }
        }
        const double rmse = std::sqrt(sq / static_cast<double>(n));
        ok = ok && rmse < lin_rmse;
        detail += fmt(" %.4f", rmse);
    }
    detail += fmt(" over %zu held-out windows", test.size());
    return {ok, detail};
}

Outcome inference_speed()
{
    SynthConfig sc;
    sc.n_stations = 19;
    sc.days = 10;
    const PreparedCity city = prepare_city(std::make_shared<const CityDataset>(synth_generate(sc, 4)));
    ModelConfig mc = model_config_for(city);
    const ForecastModel six(mc, ModelKind::SixHour);
    const ForecastModel interp(mc, ModelKind::Interpolator);
    const auto t0 = std::chrono::steady_clock::now();
    const ForecastBundle b = hourly_forecast(six, interp, city, city.data->start + std::chrono::hours(6), 12);
    const double secs = seconds_since(t0);
    return {b.frames.size() == 72 && secs < 5.0,
            fmt("19 stations, %zux%zu grid, %zu channels, d_model %zu: %zu hourly frames in %.2f s (< 5 s)", mc.n_lat,
                mc.n_lon, mc.grid_channels(), mc.d_model, b.frames.size(), secs)};
}

int spawn(const std::string& args, const fs::path& log)
{
    const std::string cmd =
        std::string("\"") + AIRCAST_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Files of `a` and `b` other than the skipped names; empty when the trees agree.
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b)
{
    static const std::set<std::string> skip = {"run.log", "timing.json"};
    auto files = [&](const fs::path& root) {
        std::set<std::string> out;
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.is_regular_file() && !skip.contains(e.path().filename().string())) {
                out.insert(fs::relative(e.path(), root).string());
            }
        }
        return out;
    };
    const auto fa = files(a), fb = files(b);
    std::vector<std::string> diff;
    std::set_symmetric_difference(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(diff));
    for (const auto& f : fa) {
        if (fb.contains(f) && slurp(a / f) != slurp(b / f)) {
            diff.push_back(f);
        }
    }
    return diff;
}

Outcome reproducibility()
{
    const fs::path root = fs::temp_directory_path() / fmt("aircast_acceptance_%d", static_cast<int>(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    write_text_file(root / "cfg.json", R"({
  "synth": {"n_stations": 4, "n_lat": 6, "n_lon": 6, "resolution": 0.2, "days": 21,
            "met_channels": ["T2M", "U10M", "V10M"], "ems_channels": ["NOx", "SO2"]},
  "model": {"d_model": 8, "temb_dim": 4, "mlp_hidden": 16, "resnet_depth": 1, "resnet_width": 4},
  "train": {"epochs": 2, "batch_size": 8},
  "ablation": {"forecast_steps": 2, "block_hours": 48, "holdout_every": 3}
})");
    const std::string cfg = "--config \"" + (root / "cfg.json").string() + "\"";
    auto dir = [&](const std::string& name) { return "\"" + (root / name).string() + "\""; };
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"data", "synth " + cfg + " --seed 11 --out " + dir("data")},
        {"t6", "train " + cfg + " --data " + dir("data") + " --out " + dir("t6")},
        {"ti", "train-interp " + cfg + " --data " + dir("data") + " --out " + dir("ti")},
        {"fc", "forecast --data " + dir("data") + " --checkpoint " + dir("t6/checkpoint") + " --interp-checkpoint "
                   + dir("ti/checkpoint") + " --init-every 48 --out " + dir("fc")},
        {"ev", "evaluate --data " + dir("data") + " --forecast " + dir("fc/forecast.csv") + " --out " + dir("ev")},
        {"ab", "ablate " + cfg + " --data " + dir("data") + " --arms ALL,DEEMS --out " + dir("ab")},
        {"gc", "gradcheck --seed 3 --out " + dir("gc")},
        {"pl", "plot --report " + dir("ev/report.json") + " --out " + dir("pl")},
    };
    std::vector<std::string> problems;
    for (const auto& [name, args] : runs) {
        if (spawn(args, root / (name + ".out")) != 0) {
            problems.push_back(name + " failed");
        }
    }
    std::size_t checked = 0;
    for (const auto& [name, args] : runs) {
        if (!fs::exists(root / name / "run_config.json")) {
            problems.push_back(name + " has no run_config.json");
            continue;
        }
        const auto rc = nlohmann::json::parse(slurp(root / name / "run_config.json"));
        const std::string again = name + "_again";
        if (spawn(rc.at("command").get<std::string>() + " --config \"" + (root / name / "run_config.json").string()
                      + "\" --out " + dir(again),
                  root / (again + ".out"))
            != 0) {
            problems.push_back(again + " failed");
            continue;
        }
        for (const auto& f : tree_differences(root / name, root / again)) {
            problems.push_back(name + "/" + f + " differs");
        }
        ++checked;
    }
    if (problems.empty()) {
        fs::remove_all(root);
    }
    std::string detail = fmt("%zu run directories re-executed from run_config.json", checked);
    if (problems.empty()) {
        detail += ", outputs bit-identical apart from run.log and timing.json";
    } else {
        for (const auto& p : problems) {
            detail += "; " + p;
        }
        detail += " (kept " + root.string() + ")";
    }
    return {problems.empty() && checked == runs.size(), detail};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient fidelity", gradient_fidelity},
        {"attention invariants", attention_invariants},
        {"metric oracle equivalence", metric_oracle},
        {"dual-scale structural contract", dual_scale_contract},
        {"quantile behaviour", quantile_behaviour},
        {"overfit check", overfit_check},
        {"ablation ordering", ablation_ordering},
        {"error-growth trend", error_growth},
        {"interpolator value", interpolator_value},
        {"inference speed", inference_speed},
        {"reproducibility", reproducibility},
    };
    CLI::App app{"aircast acceptance suite"};
    std::vector<std::size_t> only;
    app.add_option("criteria", only, "1-based criteria to run (default: all)")->check(CLI::Range(1, 11));
    CLI11_PARSE(app, argc, argv);
    if (only.empty()) {
        only.resize(criteria.size());
        std::iota(only.begin(), only.end(), 1);
    }

    std::size_t failed = 0;
    for (std::size_t id : only) {
        const auto& [name, run] = criteria[id - 1];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("[%s] %2zu %-31s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%zu of %zu criteria passed\n", only.size() - failed, only.size());
    return failed == 0 ? 0 : 1;
}
