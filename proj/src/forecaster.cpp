#include "aircast/forecaster.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace aircast {

std::optional<std::size_t> ForecastBundle::index_of(int lead_hour) const
{
    auto it = std::lower_bound(lead_hours.begin(), lead_hours.end(), lead_hour);
    if (it == lead_hours.end() || *it != lead_hour) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - lead_hours.begin());
}

void sort_quantiles(Tensor& t)
{
    const std::size_t q = t.shape().back();
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); i += q) {
        std::sort(d.begin() + static_cast<std::ptrdiff_t>(i), d.begin() + static_cast<std::ptrdiff_t>(i + q));
    }
}

Tensor quantile_slice(const Tensor& t, std::size_t q)
{
    const std::size_t nq = t.shape().back();
    if (q >= nq) {
        throw OutOfBoundsError("quantile index " + std::to_string(q) + " of " + std::to_string(nq));
    }
    Shape shape(t.shape().begin(), t.shape().end() - 1);
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = t[i * nq + q];
    }
    return out;
}

Tensor denormalize_frame(const Tensor& z, const NormStats& stats)
{
    // Pollutant is the second-to-last axis of [.. x 6 x Q].
    const std::size_t nq = z.shape().back();
    Tensor out = z;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = denormalize(z[i], stats, (i / nq) % kPollutants);
    }
    return out;
}

Tensor step_forecast(const ForecastModel& model, const ModelInputs& in)
{
    if (model.kind() != ModelKind::SixHour) {
        throw ValidationError("step_forecast needs the 6-hour model");
    }
    nn::Graph g(false);
    const ModelOutputs out = model.forward(g, in);
    const auto& cfg = model.config();
    Tensor frame = out.prediction.value().reshaped({cfg.stations, cfg.pollutants, cfg.quantile_count()});
    sort_quantiles(frame);
    return frame;
}

std::vector<Tensor> rollout(const ForecastModel& model, const RolloutInputs& in, std::size_t steps)
{
    if (steps == 0) {
        throw ValidationError("rollout needs at least one step");
    }
    if (in.step_grids.size() < steps) {
        throw MissingArtifactError("no meteorology for rollout step " + std::to_string(in.step_grids.size() + 1));
    }
    const std::size_t median = model.config().median_index();
    std::vector<Tensor> frames;
    frames.reserve(steps);
    ModelInputs mi{in.x_prev, in.x_curr, in.site_pe, {}, {}};
    for (std::size_t k = 0; k < steps; ++k) {
        mi.grid = in.step_grids[k];
        mi.timecode = encode_time(in.t0 + std::chrono::hours(6 * static_cast<long>(k)));
        frames.push_back(step_forecast(model, mi));
        mi.x_prev = std::move(mi.x_curr);
        mi.x_curr = quantile_slice(frames.back(), median);
    }
    return frames;
}

Tensor interpolate_frames(const ForecastModel& interp, const Tensor& x_k, const Tensor& x_k6, const Tensor& site_pe,
                          const Tensor& grid, TimeCode tc)
{
    if (interp.kind() != ModelKind::Interpolator) {
        throw ValidationError("interpolate_frames needs the interpolation model");
    }
    nn::Graph g(false);
    const ModelOutputs out = interp.forward(g, {x_k, x_k6, site_pe, grid, tc});
    const auto& cfg = interp.config();
    const Tensor& p = out.prediction.value(); // [N x 5 x 6 x Q]
    const std::size_t n = cfg.stations, block = cfg.pollutants * cfg.quantile_count();
    Tensor frames({5, n, cfg.pollutants, cfg.quantile_count()});
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t f = 0; f < 5; ++f) {
            std::copy_n(&p[(s * 5 + f) * block], block, &frames[(f * n + s) * block]);
        }
    }
    sort_quantiles(frames);
    return frames;
}

Tensor city_grid(const PreparedCity& city, Hour met_time, Hour ems_time, InputMask mask)
{
    return city.grid_input(city.data->met_at(met_time), *city.data->ems_for(ems_time), mask);
}

RolloutInputs rollout_inputs(const PreparedCity& city, Hour t0, std::size_t steps, InputMask mask)
{
    const std::int64_t idx = hours_between(city.data->start, t0);
    auto prev = city.frame(idx - 6);
    auto curr = city.frame(idx);
    if (!prev || !curr) {
        throw ValidationError("no complete observations at " + format_hour(t0) + " and six hours before");
    }
    RolloutInputs in{std::move(*prev), std::move(*curr), city.site_pe, t0, {}};
    for (std::size_t k = 1; k <= steps; ++k) {
        const Hour anchor = t0 + std::chrono::hours(6 * static_cast<long>(k - 1));
        const Hour valid = anchor + std::chrono::hours(6);
        if (!city.data->has_met(valid)) {
            throw MissingArtifactError("no meteorology for rollout step " + std::to_string(k) + " (valid "
                                       + format_hour(valid) + ")");
        }
        in.step_grids.push_back(city_grid(city, valid, anchor, mask));
    }
    return in;
}

namespace {

ForecastBundle empty_bundle(const ForecastModel& model, const PreparedCity& city, Hour t0)
{
    if (model.config().stations != city.stations()) {
        throw ShapeError("model expects " + std::to_string(model.config().stations) + " stations, city has "
                         + std::to_string(city.stations()));
    }
    ForecastBundle b;
    b.init_time = t0;
    b.quantiles = model.config().quantiles;
    b.station_ids = city.station_ids();
    return b;
}

} // namespace

ForecastBundle forecast_6h(const ForecastModel& model, const PreparedCity& city, Hour t0, std::size_t steps,
                           InputMask mask)
{
    ForecastBundle b = empty_bundle(model, city, t0);
    const auto frames = rollout(model, rollout_inputs(city, t0, steps, mask), steps);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        b.lead_hours.push_back(static_cast<int>(6 * (k + 1)));
        b.frames.push_back(denormalize_frame(frames[k], city.norm));
    }
    return b;
}

ForecastBundle hourly_forecast(const ForecastModel& model, const ForecastModel& interp, const PreparedCity& city,
                               Hour t0, std::size_t steps, InputMask mask)
{
    if (interp.config().quantiles != model.config().quantiles) {
        throw ValidationError("6-hour and interpolation models use different quantiles");
    }
    ForecastBundle b = empty_bundle(model, city, t0);
    const RolloutInputs in = rollout_inputs(city, t0, steps, mask);
    const auto frames = rollout(model, in, steps);
    const std::size_t median = model.config().median_index();
    const std::size_t n = city.stations(), block = kPollutants * model.config().quantile_count();
    for (std::size_t k = 0; k < steps; ++k) {
        const Hour anchor = t0 + std::chrono::hours(6 * static_cast<long>(k));
        const Tensor x_k = k == 0 ? in.x_curr : quantile_slice(frames[k - 1], median);
        const Tensor x_k6 = quantile_slice(frames[k], median);
        const Tensor grid = city_grid(city, anchor + std::chrono::hours(3), anchor, mask);
        const Tensor mid = interpolate_frames(interp, x_k, x_k6, in.site_pe, grid, encode_time(anchor));
        for (std::size_t f = 0; f < 5; ++f) {
            Tensor frame({n, kPollutants, model.config().quantile_count()});
            std::copy_n(&mid[f * n * block], n * block, &frame[0]);
            b.lead_hours.push_back(static_cast<int>(6 * k + f + 1));
            b.frames.push_back(denormalize_frame(frame, city.norm));
        }
        b.lead_hours.push_back(static_cast<int>(6 * (k + 1)));
        b.frames.push_back(denormalize_frame(frames[k], city.norm));
    }
    return b;
}

void write_forecast_csv(const std::filesystem::path& path, const std::vector<ForecastBundle>& bundles)
{
    std::ostringstream os;
    os << "init_time,station_id,pollutant,lead_hour,quantile,value\n";
    for (const auto& b : bundles) {
        const std::string init = format_hour(b.init_time);
        const std::size_t nq = b.quantiles.size();
        for (std::size_t s = 0; s < b.station_ids.size(); ++s) {
            for (std::size_t p = 0; p < kPollutants; ++p) {
                for (std::size_t i = 0; i < b.lead_hours.size(); ++i) {
                    for (std::size_t q = 0; q < nq; ++q) {
                        os << init << ',' << csv_field(b.station_ids[s]) << ',' << kPollutantNames[p] << ','
                           << b.lead_hours[i] << ',' << format_double(b.quantiles[q]) << ','
                           << format_double(b.frames[i][(s * kPollutants + p) * nq + q]) << '\n';
                    }
                }
            }
        }
    }
    write_text_file(path, os.str());
}

std::vector<ForecastBundle> read_forecast_csv(const std::filesystem::path& path)
{
    std::istringstream is(read_text_file(path));
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "init_time,station_id,pollutant,lead_hour,quantile,value") {
        throw ValidationError(path.string() + ": unexpected forecast header");
    }
    struct Raw {
        std::vector<std::string> stations;
        std::vector<double> quantiles;
        std::vector<int> hours;
        std::map<std::tuple<std::string, std::size_t, int, double>, double> values;
    };
    std::map<std::string, Raw> raw;
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> cols = split_csv_line(line);
        if (cols.size() != 6) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
        }
        auto [it, inserted] = raw.try_emplace(cols[0]);
        if (inserted) {
            order.push_back(cols[0]);
        }
        Raw& r = it->second;
        try {
            const std::size_t p = pollutant_index(cols[2]);
            const int h = std::stoi(cols[3]);
            const double q = std::stod(cols[4]);
            const double v = std::stod(cols[5]);
            if (std::find(r.stations.begin(), r.stations.end(), cols[1]) == r.stations.end()) {
                r.stations.push_back(cols[1]);
            }
            if (std::find(r.quantiles.begin(), r.quantiles.end(), q) == r.quantiles.end()) {
                r.quantiles.push_back(q);
            }
            if (std::find(r.hours.begin(), r.hours.end(), h) == r.hours.end()) {
                r.hours.push_back(h);
            }
            r.values[{cols[1], p, h, q}] = v;
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
        }
    }
    std::vector<ForecastBundle> out;
    for (const auto& init : order) {
        Raw& r = raw.at(init);
        std::sort(r.quantiles.begin(), r.quantiles.end());
        std::sort(r.hours.begin(), r.hours.end());
        ForecastBundle b;
        b.init_time = parse_hour(init);
        b.quantiles = r.quantiles;
        b.station_ids = r.stations;
        b.lead_hours = r.hours;
        const std::size_t nq = r.quantiles.size();
        for (int h : r.hours) {
            Tensor frame({r.stations.size(), kPollutants, nq});
            for (std::size_t s = 0; s < r.stations.size(); ++s) {
                for (std::size_t p = 0; p < kPollutants; ++p) {
                    for (std::size_t q = 0; q < nq; ++q) {
                        auto v = r.values.find({r.stations[s], p, h, r.quantiles[q]});
                        if (v == r.values.end()) {
                            throw ValidationError(path.string() + ": missing value for " + r.stations[s] + " "
                                                  + std::string(kPollutantNames[p]) + " hour " + std::to_string(h));
                        }
                        frame[(s * kPollutants + p) * nq + q] = v->second;
                    }
                }
            }
            b.frames.push_back(std::move(frame));
        }
        out.push_back(std::move(b));
    }
    return out;
}

AttentionMaps attention_maps(const ForecastModel& model, const ModelInputs& in)
{
    nn::Graph g(false);
    const ModelOutputs out = model.forward(g, in);
    return {out.site_attention.value(), out.cross_attention.value()};
}

void write_cross_attention_csv(const std::filesystem::path& path, const AttentionMaps& maps,
                               const std::vector<std::string>& station_ids, const GridGeometry& geometry)
{
    if (maps.cross.dim(0) != station_ids.size() || maps.cross.dim(1) != geometry.cells()) {
        throw ShapeError("cross-attention map " + shape_string(maps.cross.shape()) + " does not match "
                         + std::to_string(station_ids.size()) + " stations x " + std::to_string(geometry.cells())
                         + " cells");
    }
    std::ostringstream os;
    os << "station_id,row,col,lat,lon,weight\n";
    for (std::size_t s = 0; s < station_ids.size(); ++s) {
        for (std::size_t i = 0; i < geometry.n_lat; ++i) {
            for (std::size_t j = 0; j < geometry.n_lon; ++j) {
                os << csv_field(station_ids[s]) << ',' << i << ',' << j << ',' << format_double(geometry.lat_of(i)) << ','
                   << format_double(geometry.lon_of(j)) << ','
                   << format_double(maps.cross.at(s, i * geometry.n_lon + j)) << '\n';
            }
        }
    }
    write_text_file(path, os.str());
}

} // namespace aircast
