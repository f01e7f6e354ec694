#include "aircast/synth.hpp"

#include "aircast/error.hpp"
#include "aircast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <utility>

namespace aircast {

std::vector<std::string> default_met_channels()
{
    return {"T2M",   "D2M",   "U10M",   "V10M", "V100M", "U100M",  "TP",
            "U1000", "V1000", "T1000",  "SH1000", "U925", "V925",  "T925",
            "SH925", "U850",  "V850",   "T850", "SH850"};
}

std::vector<std::string> default_ems_channels()
{
    return {"NOx", "CO", "NH3", "PM10", "PM2.5", "SO2", "VOCs"};
}

void validate(const SynthConfig& cfg)
{
    std::vector<std::string> bad;
    if (cfg.city.empty()) {
        bad.push_back("city");
    }
    if (cfg.n_stations < 1) {
        bad.push_back("n_stations");
    }
    if (!(cfg.resolution > 0.0)) {
        bad.push_back("resolution");
    }
    if (cfg.n_lat < 4) {
        bad.push_back("n_lat");
    }
    if (cfg.n_lon < 4) {
        bad.push_back("n_lon");
    }
    if (cfg.days < 10) {
        bad.push_back("days");
    }
    if (!(cfg.origin_lat >= -90.0) || cfg.origin_lat + static_cast<double>(cfg.n_lat) * cfg.resolution > 90.0) {
        bad.push_back("origin_lat");
    }
    if (!(cfg.origin_lon >= -180.0) || cfg.origin_lon + static_cast<double>(cfg.n_lon) * cfg.resolution > 180.0) {
        bad.push_back("origin_lon");
    }
    try {
        (void)parse_hour(cfg.start);
    } catch (const Error&) {
        bad.push_back("start");
    }
    auto unique_nonempty = [](const std::vector<std::string>& v) {
        std::set<std::string> s(v.begin(), v.end());
        return !v.empty() && s.size() == v.size() && !s.contains("");
    };
    if (!unique_nonempty(cfg.met_channels)) {
        bad.push_back("met_channels");
    }
    if (!unique_nonempty(cfg.ems_channels)) {
        bad.push_back("ems_channels");
    }
    for (auto [name, v] : {std::pair{"noise_amplitude", cfg.noise_amplitude}, {"met_influence", cfg.met_influence},
                           {"emission_influence", cfg.emission_influence}, {"diurnal_amplitude", cfg.diurnal_amplitude},
                           {"seasonal_amplitude", cfg.seasonal_amplitude}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            bad.push_back(name);
        }
    }
    if (cfg.diurnal_amplitude * 1.6 + cfg.seasonal_amplitude >= 1.0) {
        bad.push_back("diurnal_amplitude+seasonal_amplitude");
    }
    if (!(cfg.noise_persistence >= 0.0 && cfg.noise_persistence < 1.0)) {
        bad.push_back("noise_persistence");
    }
    if (!(cfg.missing_fraction >= 0.0 && cfg.missing_fraction < 1.0)) {
        bad.push_back("missing_fraction");
    }
    if (!bad.empty()) {
        std::string msg = "invalid synthetic config fields:";
        for (const auto& b : bad) {
            msg += " " + b;
        }
        throw ValidationError(msg);
    }
}

nlohmann::ordered_json to_json(const SynthConfig& c)
{
    nlohmann::ordered_json j;
    j["city"] = c.city;
    j["n_stations"] = c.n_stations;
    j["origin_lat"] = c.origin_lat;
    j["origin_lon"] = c.origin_lon;
    j["resolution"] = c.resolution;
    j["n_lat"] = c.n_lat;
    j["n_lon"] = c.n_lon;
    j["days"] = c.days;
    j["start"] = c.start;
    j["met_channels"] = c.met_channels;
    j["ems_channels"] = c.ems_channels;
    j["noise_amplitude"] = c.noise_amplitude;
    j["met_influence"] = c.met_influence;
    j["emission_influence"] = c.emission_influence;
    j["diurnal_amplitude"] = c.diurnal_amplitude;
    j["seasonal_amplitude"] = c.seasonal_amplitude;
    j["noise_persistence"] = c.noise_persistence;
    j["missing_fraction"] = c.missing_fraction;
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c)
{
    const auto known = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown synthetic config key '" + key + "'");
        }
    }
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        }
    };
    take("city", c.city);
    take("n_stations", c.n_stations);
    take("origin_lat", c.origin_lat);
    take("origin_lon", c.origin_lon);
    take("resolution", c.resolution);
    take("n_lat", c.n_lat);
    take("n_lon", c.n_lon);
    take("days", c.days);
    take("start", c.start);
    take("met_channels", c.met_channels);
    take("ems_channels", c.ems_channels);
    take("noise_amplitude", c.noise_amplitude);
    take("met_influence", c.met_influence);
    take("emission_influence", c.emission_influence);
    take("diurnal_amplitude", c.diurnal_amplitude);
    take("seasonal_amplitude", c.seasonal_amplitude);
    take("noise_persistence", c.noise_persistence);
    take("missing_fraction", c.missing_fraction);
    return c;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Per-pollutant shape of the generative model.
struct PollutantProfile {
    double base;          // typical level (CO in mg/m3, others ug/m3)
    double diurnal_scale; // multiplier on the configured diurnal amplitude
    double diurnal_peak;  // UTC hour of the diurnal maximum
    double seasonal_peak; // day of year of the seasonal maximum
    double emission;      // emission term weight, fraction of base
    double transport;     // transport term weight, fraction of base
    double thermal;       // temperature term weight, fraction of base
    const char* species;  // emission channel driving the pollutant
};

constexpr std::array<PollutantProfile, kPollutants> kProfiles = {{
    {10.0, 1.0, 2.0, 15.0, 0.5, 0.20, 0.0, "SO2"},
    {35.0, 1.0, 0.0, 20.0, 0.6, 0.15, 0.0, "NOx"},
    {0.8, 0.8, 1.0, 10.0, 0.5, 0.20, 0.0, "CO"},
    {60.0, 1.6, 7.0, 180.0, 0.3, 0.10, 0.30, "VOCs"},
    {40.0, 0.8, 16.0, 15.0, 0.5, 0.30, 0.0, "PM2.5"},
    {70.0, 0.8, 16.0, 60.0, 0.5, 0.25, 0.0, "PM10"},
}};

constexpr double kNoiseFraction = 0.12;
constexpr double kUpwindReach = 0.0;
constexpr std::size_t kSources = 5;
constexpr int kUpwindSamples = 3;
// Hourly relaxation of the emission loading towards its ventilated equilibrium.
const double kEmissionResponse = 1.0 - std::exp(-1.0 / 3.0);

// Mean-reverting unit-variance process sampled hourly.
class Ou {
public:
    Ou(double correlation_hours, std::mt19937_64& rng)
        : phi_(std::exp(-1.0 / correlation_hours)), state_(std::normal_distribution<double>(0.0, 1.0)(rng))
    {
    }
    double next(std::mt19937_64& rng)
    {
        const double v = state_;
        state_ = phi_ * state_ + std::sqrt(1.0 - phi_ * phi_) * normal_(rng);
        return v;
    }

private:
    double phi_;
    double state_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

double round_f32(double v)
{
    return static_cast<double>(static_cast<float>(v));
}

// Named meteorological quantities for one hour; channels are derived from these.
struct MetState {
    double u0, v0, dudx, dudy, dvdx, dvdy;
    double t_anom, t_grad, dew_dep, precip, generic;
};

enum class MetKind { U, V, T, Dew, Precip, Humidity, Generic };

struct MetChannelSpec {
    MetKind kind = MetKind::Generic;
    double lift = 1.0;  // wind multiplier relative to 10 m
    double lapse = 0.0; // temperature offset relative to 2 m, K
    double offset = 0.0;
};

MetChannelSpec parse_met_channel(const std::string& name, std::size_t index)
{
    if (name == "U10M") {
        return {MetKind::U};
    }
    if (name == "V10M") {
        return {MetKind::V};
    }
    if (name == "U100M") {
        return {MetKind::U, 1.3};
    }
    if (name == "V100M") {
        return {MetKind::V, 1.3};
    }
    if (name == "T2M") {
        return {MetKind::T};
    }
    if (name == "D2M") {
        return {MetKind::Dew};
    }
    if (name == "TP") {
        return {MetKind::Precip};
    }
    struct Level {
        const char* suffix;
        double lift;
        double lapse;
    };
    constexpr Level levels[] = {{"1000", 1.1, -1.0}, {"925", 1.5, -6.0}, {"850", 1.8, -12.0}};
    for (const Level& lv : levels) {
        for (auto [prefix, kind] : {std::pair{"U", MetKind::U}, {"V", MetKind::V}, {"T", MetKind::T}, {"SH", MetKind::Humidity}}) {
            if (name == std::string(prefix) + lv.suffix) {
                return {kind, lv.lift, lv.lapse, kind == MetKind::U ? 0.5 * (lv.lift - 1.0) : 0.0};
            }
        }
    }
    return {MetKind::Generic, 1.0, 0.0, 0.3 * static_cast<double>(index % 5)};
}

double met_channel_value(const MetChannelSpec& spec, const MetState& m, double x, double y, double seasonal,
                         double diurnal)
{
    const double u = m.u0 + m.dudx * x + m.dudy * y;
    const double v = m.v0 + m.dvdx * x + m.dvdy * y;
    const double t2m = 283.0 + 10.0 * seasonal + 4.0 * diurnal + 2.5 * m.t_anom - 1.5 * m.t_grad * y;
    const double d2m = t2m - 6.0 - 2.0 * m.dew_dep;
    switch (spec.kind) {
    case MetKind::U:
        return spec.lift * u + spec.offset;
    case MetKind::V:
        return spec.lift * v;
    case MetKind::T:
        return t2m + spec.lapse - 1.5 * diurnal * (spec.lift - 1.0);
    case MetKind::Dew:
        return d2m;
    case MetKind::Precip:
        return std::max(0.0, m.precip - 1.0) * 1.5 * (1.0 + 0.2 * y);
    case MetKind::Humidity:
        return std::max(0.5, 0.35 * (d2m - 250.0) / spec.lift);
    case MetKind::Generic:
        break;
    }
    return spec.offset + m.generic + 0.5 * m.generic * x - 0.3 * y;
}

} // namespace

CityDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed)
{
    validate(cfg);
    const Hour start = parse_hour(cfg.start);
    const std::size_t T = cfg.days * 24;
    const GridGeometry geo{cfg.origin_lat, cfg.origin_lon, cfg.resolution, cfg.n_lat, cfg.n_lon};
    const double lat_c = geo.lat_of(0) + 0.5 * static_cast<double>(cfg.n_lat - 1) * cfg.resolution;
    const double lon_c = geo.lon_of(0) + 0.5 * static_cast<double>(cfg.n_lon - 1) * cfg.resolution;
    const double half_lat = 0.5 * static_cast<double>(cfg.n_lat - 1) * cfg.resolution;
    const double half_lon = 0.5 * static_cast<double>(cfg.n_lon - 1) * cfg.resolution;

    CityDataset d;
    d.city = cfg.city;
    d.start = start;
    d.hours = T;
    auto embedded = to_json(cfg);
    embedded["seed"] = seed;
    d.embedded_config = embedded.dump(2) + "\n";

    // Stations inside the central 80% of the grid.
    auto srng = make_rng(seed, "synth.stations");
    std::uniform_real_distribution<double> unit(-0.8, 0.8);
    std::vector<Station> stations;
    for (std::size_t s = 0; s < cfg.n_stations; ++s) {
        char id[64];
        std::snprintf(id, sizeof id, "%s-S%02zu", cfg.city.c_str(), s + 1);
        const double lat = lat_c + unit(srng) * half_lat;
        const double lon = lon_c + unit(srng) * half_lon;
        stations.push_back(Station{id, std::round(lat * 1e4) / 1e4, std::round(lon * 1e4) / 1e4});
    }

    // Emission inventory: smooth urban pattern scaled by a random monthly factor per species.
    auto erng = make_rng(seed, "synth.ems");
    std::uniform_real_distribution<double> blob(-0.6, 0.6);
    std::array<std::array<double, 2>, kSources> sources{};
    for (auto& src : sources) {
        src = {lat_c + blob(erng) * half_lat, lon_c + blob(erng) * half_lon};
    }
    const double sigma = 0.25 * std::max(half_lat, half_lon);
    std::uniform_real_distribution<double> monthly(0.2, 1.8);
    // Each source has its own monthly activity so the spatial pattern shifts between months.
    auto pattern = [&](double lat, double lon, const std::array<double, kSources>& activity) {
        double v = 0.3;
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto& [blat, blon] = sources[i];
            const double d2 = (lat - blat) * (lat - blat) + (lon - blon) * (lon - blon);
            v += 1.2 * activity[i] * std::exp(-d2 / (2.0 * sigma * sigma));
        }
        return v;
    };
    std::vector<double> species_scale(cfg.ems_channels.size());
    for (std::size_t k = 0; k < species_scale.size(); ++k) {
        species_scale[k] = 10.0 + 10.0 * static_cast<double>((k * 7) % 5);
    }
    for (Hour t = start; t < start + std::chrono::hours(static_cast<long>(T)); t += std::chrono::hours(1)) {
        const YearMonth ym = year_month(t);
        if (d.ems.contains(ym)) {
            continue;
        }
        auto f = std::make_shared<GriddedField>(geo, cfg.ems_channels, month_start(ym));
        std::array<double, kSources> activity{};
        for (double& a : activity) {
            a = monthly(erng);
        }
        for (std::size_t k = 0; k < cfg.ems_channels.size(); ++k) {
            for (std::size_t r = 0; r < geo.n_lat; ++r) {
                for (std::size_t c = 0; c < geo.n_lon; ++c) {
                    f->at(k, r, c) = round_f32(species_scale[k] * pattern(geo.lat_of(r), geo.lon_of(c), activity));
                }
            }
        }
        d.ems.emplace(ym, std::move(f));
    }

    // Meteorology.
    auto mrng = make_rng(seed, "synth.met");
    Ou u0(18.0, mrng), v0(18.0, mrng), dudx(36.0, mrng), dudy(36.0, mrng), dvdx(36.0, mrng), dvdy(36.0, mrng);
    Ou t_anom(48.0, mrng), t_grad(72.0, mrng), dew(24.0, mrng), precip(6.0, mrng), generic(24.0, mrng);
    d.met.reserve(T);
    std::vector<MetChannelSpec> specs;
    for (std::size_t k = 0; k < cfg.met_channels.size(); ++k) {
        specs.push_back(parse_met_channel(cfg.met_channels[k], k));
    }
    std::vector<MetState> met_states;
    met_states.reserve(T);
    for (std::size_t h = 0; h < T; ++h) {
        const Hour t = start + std::chrono::hours(static_cast<long>(h));
        const TimeCode tc = encode_time(t);
        const double seasonal = -std::cos(kTwoPi * (tc.doy - 15.0) / 365.25);
        const double diurnal = std::cos(kTwoPi * (tc.hod - 6.0) / 24.0);
        MetState m{1.0 + 3.0 * u0.next(mrng), 0.5 + 3.0 * v0.next(mrng), 0.8 * dudx.next(mrng), 0.8 * dudy.next(mrng),
                   0.8 * dvdx.next(mrng), 0.8 * dvdy.next(mrng), t_anom.next(mrng), t_grad.next(mrng),
                   std::abs(dew.next(mrng)), precip.next(mrng), generic.next(mrng)};
        met_states.push_back(m);
        auto f = std::make_shared<GriddedField>(geo, cfg.met_channels, t);
        for (std::size_t k = 0; k < cfg.met_channels.size(); ++k) {
            for (std::size_t r = 0; r < geo.n_lat; ++r) {
                const double y = (geo.lat_of(r) - lat_c) / half_lat;
                for (std::size_t c = 0; c < geo.n_lon; ++c) {
                    const double x = (geo.lon_of(c) - lon_c) / half_lon;
                    f->at(k, r, c) = round_f32(met_channel_value(specs[k], m, x, y, seasonal, diurnal));
                }
            }
        }
        d.met.push_back(std::move(f));
    }

    // Pollutants. Wind and temperature are evaluated in closed form at the
    // station so the series do not depend on which channels are configured.
    auto nrng = make_rng(seed, "synth.noise");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double phi = cfg.noise_persistence;
    std::vector<double> ar(cfg.n_stations * kPollutants);
    for (double& a : ar) {
        a = normal(nrng);
    }
    std::vector<double> loading(cfg.n_stations * kPollutants, 0.0);
    std::vector<std::size_t> species_of(kPollutants);
    for (std::size_t p = 0; p < kPollutants; ++p) {
        const auto& names = cfg.ems_channels;
        const auto it = std::find(names.begin(), names.end(), kProfiles[p].species);
        species_of[p] = it != names.end() ? static_cast<std::size_t>(it - names.begin()) : p % names.size();
    }

    for (const auto& st : stations) {
        d.series.emplace_back(st, start, T);
    }
    for (std::size_t h = 0; h < T; ++h) {
        const Hour t = start + std::chrono::hours(static_cast<long>(h));
        const TimeCode tc = encode_time(t);
        const double seasonal = -std::cos(kTwoPi * (tc.doy - 15.0) / 365.25);
        const double diurnal = std::cos(kTwoPi * (tc.hod - 6.0) / 24.0);
        const MetState& m = met_states[h];
        const GriddedField& ems = *d.ems.at(year_month(t));
        // Daytime emission activity, zero at night.
        const double activity = 1.5 * std::max(0.0, std::sin(kTwoPi * (tc.hod - 6.0) / 24.0));
        for (std::size_t s = 0; s < stations.size(); ++s) {
            const double x = (stations[s].lon - lon_c) / half_lon;
            const double y = (stations[s].lat - lat_c) / half_lat;
            const double u = m.u0 + m.dudx * x + m.dudy * y;
            const double v = m.v0 + m.dvdx * x + m.dvdy * y;
            const double speed = std::sqrt(u * u + v * v);
            const double z = std::clamp((speed - 3.0) / 2.0, -2.0, 3.0);
            const double ventilation = std::exp(-0.5 * cfg.met_influence * z);
            const double along = (u + v) / std::numbers::sqrt2 / 3.0;
            const double t_anomaly = (10.0 * seasonal + 4.0 * diurnal + 2.5 * m.t_anom - 1.5 * m.t_grad * y) / 8.0;
            for (std::size_t p = 0; p < kPollutants; ++p) {
                const PollutantProfile& pr = kProfiles[p];
                const double diur =
                    cfg.diurnal_amplitude * pr.diurnal_scale * std::cos(kTwoPi * (tc.hod - pr.diurnal_peak) / 24.0);
                const double seas = cfg.seasonal_amplitude * std::cos(kTwoPi * (tc.doy - pr.seasonal_peak) / 365.25);
                double c = pr.base * (1.0 + diur + seas);
                const std::size_t k = species_of[p];
                const double e = sample_bilinear(ems, k, stations[s].lat, stations[s].lon) / species_scale[k];
                const double target = cfg.emission_influence * pr.emission * pr.base * e * (0.5 + 0.5 * ventilation) * activity;
                double& load = loading[s * kPollutants + p];
                load = h == 0 ? target : load + kEmissionResponse * (target - load);
                c += load;
                c += cfg.met_influence * pr.base * (pr.transport * along + pr.thermal * t_anomaly);
                double& a = ar[s * kPollutants + p];
                c += cfg.noise_amplitude * kNoiseFraction * pr.base * a;
                a = phi * a + std::sqrt(1.0 - phi * phi) * normal(nrng);
                d.series[s].set(h, p, std::max(c, 0.02 * pr.base));
            }
        }
    }

    if (cfg.missing_fraction > 0.0) {
        auto grng = make_rng(seed, "synth.missing");
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> len(1, 6);
        for (auto& s : d.series) {
            for (std::size_t p = 0; p < kPollutants; ++p) {
                for (std::size_t h = 0; h < T; ++h) {
                    if (u01(grng) < cfg.missing_fraction) {
                        const std::size_t n = len(grng);
                        for (std::size_t k = h; k < std::min(T, h + n); ++k) {
                            s.set_missing(k, p);
                        }
                        h += n;
                    }
                }
            }
        }
    }
    validate_dataset(d);
    return d;
}

} // namespace aircast
