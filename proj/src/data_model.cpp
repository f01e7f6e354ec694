#include "aircast/data_model.hpp"

#include "aircast/error.hpp"
#include "aircast/log.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace aircast {

std::size_t pollutant_index(std::string_view name)
{
    for (std::size_t p = 0; p < kPollutants; ++p) {
        if (name == kPollutantNames[p] || name == kPollutantKeys[p]) {
            return p;
        }
    }
    throw ValidationError("unknown pollutant '" + std::string(name) + "'");
}

void validate_station(const Station& s)
{
    if (s.id.empty()) {
        throw ValidationError("station id must not be empty");
    }
    if (!(s.lat >= -90.0 && s.lat <= 90.0) || !(s.lon >= -180.0 && s.lon <= 180.0)) {
        throw ValidationError("station '" + s.id + "' has coordinates outside [-90,90] x [-180,180]");
    }
}

StationSeries::StationSeries(Station s, Hour start_time, std::size_t hours)
    : station(std::move(s)), start(start_time), values(hours * kPollutants, 0.0), valid(hours * kPollutants, 0)
{
}

void StationSeries::set(std::size_t t, std::size_t p, double v, bool ok)
{
    values[t * kPollutants + p] = v;
    valid[t * kPollutants + p] = ok ? 1 : 0;
}

void StationSeries::set_missing(std::size_t t, std::size_t p)
{
    values[t * kPollutants + p] = 0.0;
    valid[t * kPollutants + p] = 0;
}

std::size_t StationSeries::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void validate_series(const StationSeries& s)
{
    validate_station(s.station);
    if (s.values.size() != s.valid.size() || s.values.size() % kPollutants != 0) {
        throw ShapeError("station '" + s.station.id + "': values and validity mask shapes differ");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (s.valid[i] && (!std::isfinite(s.values[i]) || s.values[i] < 0.0)) {
            throw ValidationError("station '" + s.station.id + "': valid entry at hour "
                                  + std::to_string(i / kPollutants) + " is negative or non-finite");
        }
    }
}

double normalize(double x, const NormStats& stats, std::size_t pollutant)
{
    if (!std::isfinite(x)) {
        throw ValidationError("cannot normalise non-finite value");
    }
    if (pollutant >= kPollutants || !(stats.std[pollutant] > 0.0)) {
        throw ValidationError("normalisation statistics require std > 0");
    }
    return (x - stats.mean[pollutant]) / stats.std[pollutant];
}

double denormalize(double z, const NormStats& stats, std::size_t pollutant)
{
    if (!std::isfinite(z)) {
        throw ValidationError("cannot denormalise non-finite value");
    }
    return z * stats.std[pollutant] + stats.mean[pollutant];
}

NormStats compute_norm_stats(const std::vector<StationSeries>& series)
{
    NormStats out;
    for (std::size_t p = 0; p < kPollutants; ++p) {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& s : series) {
            for (std::size_t t = 0; t < s.hours(); ++t) {
                if (s.is_valid(t, p)) {
                    total += s.value(t, p);
                    ++n;
                }
            }
        }
        if (n < 2) {
            throw ValidationError("pollutant " + std::string(kPollutantNames[p]) + " has fewer than 2 valid samples");
        }
        const double mean = total / static_cast<double>(n);
        double sq = 0.0;
        for (const auto& s : series) {
            for (std::size_t t = 0; t < s.hours(); ++t) {
                if (s.is_valid(t, p)) {
                    sq += (s.value(t, p) - mean) * (s.value(t, p) - mean);
                }
            }
        }
        const double sd = std::sqrt(sq / static_cast<double>(n));
        if (!(sd > 0.0)) {
            throw ValidationError("pollutant " + std::string(kPollutantNames[p]) + " has zero variance");
        }
        out.mean[p] = mean;
        out.std[p] = sd;
    }
    return out;
}

StationSeries fill_gaps(const StationSeries& series, std::size_t max_gap)
{
    if (max_gap < 1) {
        throw ValidationError("max_gap must be at least 1");
    }
    StationSeries out = series;
    const std::size_t T = series.hours();
    for (std::size_t p = 0; p < kPollutants; ++p) {
        std::size_t t = 0;
        while (t < T) {
            if (series.is_valid(t, p)) {
                ++t;
                continue;
            }
            std::size_t end = t;
            while (end < T && !series.is_valid(end, p)) {
                ++end;
            }
            const std::size_t len = end - t;
            if (t > 0 && end < T && len <= max_gap) {
                const double a = series.value(t - 1, p);
                const double b = series.value(end, p);
                for (std::size_t k = t; k < end; ++k) {
                    const double w = static_cast<double>(k - (t - 1)) / static_cast<double>(len + 1);
                    out.set(k, p, a + w * (b - a));
                }
            }
            t = end;
        }
    }
    return out;
}

std::pair<std::size_t, std::size_t> GridGeometry::nearest_cell(double lat, double lon) const
{
    auto clamp_index = [](double f, std::size_t n) {
        const double r = std::round(f);
        if (r < 0.0) {
            return std::size_t{0};
        }
        return std::min(static_cast<std::size_t>(r), n - 1);
    };
    return {clamp_index((lat - origin_lat) / resolution, n_lat), clamp_index((lon - origin_lon) / resolution, n_lon)};
}

GriddedField::GriddedField(GridGeometry g, std::vector<std::string> channel_names, Hour t)
    : geometry(g), channels(std::move(channel_names)), time(t), data({channels.size(), g.n_lat, g.n_lon}, 0.0)
{
}

std::size_t GriddedField::channel_index(std::string_view name) const
{
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c] == name) {
            return c;
        }
    }
    throw ValidationError("field has no channel '" + std::string(name) + "'");
}

void validate_field(const GriddedField& f)
{
    if (!(f.geometry.resolution > 0.0)) {
        throw ValidationError("grid resolution must be positive");
    }
    if (f.geometry.n_lat == 0 || f.geometry.n_lon == 0) {
        throw ValidationError("grid must have at least one cell");
    }
    if (f.data.shape() != Shape{f.channels.size(), f.geometry.n_lat, f.geometry.n_lon}) {
        throw ShapeError("grid data shape " + shape_string(f.data.shape()) + " does not match declared dims");
    }
    std::set<std::string> seen;
    for (const auto& c : f.channels) {
        if (!seen.insert(c).second) {
            throw ValidationError("duplicate channel name '" + c + "'");
        }
    }
}

namespace {

// Lower bracketing index and weight for fractional position `f` on an axis of n centres.
std::pair<std::size_t, double> bracket(double f, std::size_t n, const char* axis)
{
    constexpr double tol = 1e-9;
    if (f < -tol || f > static_cast<double>(n - 1) + tol) {
        throw OutOfBoundsError(std::string("bilinear sample outside source extent along ") + axis);
    }
    if (n == 1) {
        return {0, 0.0};
    }
    f = std::clamp(f, 0.0, static_cast<double>(n - 1));
    std::size_t i0 = static_cast<std::size_t>(std::floor(f));
    i0 = std::min(i0, n - 2);
    return {i0, f - static_cast<double>(i0)};
}

} // namespace

double sample_bilinear(const GriddedField& field, std::size_t channel, double lat, double lon)
{
    const GridGeometry& g = field.geometry;
    const auto [r0, wy] = bracket((lat - g.origin_lat) / g.resolution, g.n_lat, "latitude");
    const auto [c0, wx] = bracket((lon - g.origin_lon) / g.resolution, g.n_lon, "longitude");
    const std::size_t r1 = g.n_lat > 1 ? r0 + 1 : r0;
    const std::size_t c1 = g.n_lon > 1 ? c0 + 1 : c0;
    const double v00 = field.at(channel, r0, c0);
    const double v01 = field.at(channel, r0, c1);
    const double v10 = field.at(channel, r1, c0);
    const double v11 = field.at(channel, r1, c1);
    return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
}

GriddedField bilinear_regrid(const GriddedField& field, const GridGeometry& target)
{
    validate_field(field);
    if (!(target.resolution > 0.0)) {
        throw ValidationError("target resolution must be positive");
    }
    GriddedField out(target, field.channels, field.time);
    for (std::size_t c = 0; c < field.channels.size(); ++c) {
        for (std::size_t r = 0; r < target.n_lat; ++r) {
            for (std::size_t k = 0; k < target.n_lon; ++k) {
                out.at(c, r, k) = sample_bilinear(field, c, target.lat_of(r), target.lon_of(k));
            }
        }
    }
    return out;
}

GriddedField bilinear_regrid(const GriddedField& field, double target_resolution)
{
    if (!(target_resolution > 0.0)) {
        throw ValidationError("target resolution must be positive");
    }
    const GridGeometry& g = field.geometry;
    auto count = [&](std::size_t n) {
        const double span = static_cast<double>(n - 1) * g.resolution;
        return static_cast<std::size_t>(std::floor(span / target_resolution + 1e-9)) + 1;
    };
    GridGeometry target{g.origin_lat, g.origin_lon, target_resolution, count(g.n_lat), count(g.n_lon)};
    return bilinear_regrid(field, target);
}

std::array<double, 4> relative_pe(double lat, double lon, double ref_lat, double ref_lon, double lat_range,
                                  double lon_range)
{
    if (!(lat_range > 0.0) || !(lon_range > 0.0)) {
        throw ValidationError("positional encoding ranges must be positive");
    }
    constexpr double deg = std::numbers::pi / 180.0;
    const double dlat = (lat - ref_lat) * deg;
    const double dlon = (lon - ref_lon) * deg;
    return {std::sin(dlat) / lat_range, std::cos(dlat) / lat_range, std::sin(dlon) / lon_range,
            std::cos(dlon) / lon_range};
}

const GridGeometry& CityDataset::geometry() const
{
    if (met.empty()) {
        throw ValidationError("dataset has no meteorology fields");
    }
    return met.front()->geometry;
}

std::vector<Station> CityDataset::stations() const
{
    std::vector<Station> out;
    out.reserve(series.size());
    for (const auto& s : series) {
        out.push_back(s.station);
    }
    return out;
}

std::size_t CityDataset::met_channels() const
{
    return met.empty() ? 0 : met.front()->channels.size();
}

std::size_t CityDataset::ems_channels() const
{
    return ems.empty() ? 0 : ems.begin()->second->channels.size();
}

bool CityDataset::has_met(Hour t) const
{
    const auto idx = hours_between(start, t);
    return idx >= 0 && static_cast<std::size_t>(idx) < met.size();
}

std::shared_ptr<const GriddedField> CityDataset::met_ptr(Hour t) const
{
    if (!has_met(t)) {
        throw MissingArtifactError("no meteorology frame at " + format_hour(t));
    }
    return met[static_cast<std::size_t>(hours_between(start, t))];
}

const GriddedField& CityDataset::met_at(Hour t) const
{
    return *met_ptr(t);
}

std::shared_ptr<const GriddedField> CityDataset::ems_for(Hour t) const
{
    const auto it = ems.find(year_month(t));
    if (it == ems.end()) {
        throw MissingArtifactError("no emission inventory for the month of " + format_hour(t));
    }
    return it->second;
}

void validate_dataset(const CityDataset& d)
{
    if (d.series.empty()) {
        throw ValidationError("dataset has no stations");
    }
    std::set<std::string> ids;
    for (const auto& s : d.series) {
        validate_series(s);
        if (!ids.insert(s.station.id).second) {
            throw ValidationError("duplicate station id '" + s.station.id + "'");
        }
        if (s.start != d.start || s.hours() != d.hours) {
            throw ValidationError("station '" + s.station.id + "' is not aligned with the dataset time axis");
        }
    }
    if (d.met.size() != d.hours) {
        throw ValidationError("dataset has " + std::to_string(d.met.size()) + " meteorology frames for "
                              + std::to_string(d.hours) + " hours");
    }
    const GridGeometry& g = d.geometry();
    for (std::size_t i = 0; i < d.met.size(); ++i) {
        validate_field(*d.met[i]);
        if (d.met[i]->geometry != g || d.met[i]->channels != d.met.front()->channels) {
            throw ValidationError("meteorology frame " + std::to_string(i) + " differs in geometry or channels");
        }
        if (d.met[i]->time != d.start + std::chrono::hours(static_cast<long>(i))) {
            throw ValidationError("meteorology frame " + std::to_string(i) + " has the wrong timestamp");
        }
    }
    for (const auto& [ym, f] : d.ems) {
        validate_field(*f);
        if (f->geometry != g || f->channels != d.ems.begin()->second->channels) {
            throw ValidationError("emission grid for " + std::to_string(ym.year) + "-" + std::to_string(ym.month)
                                  + " differs in geometry or channels");
        }
    }
    for (Hour t = d.start; t < d.start + std::chrono::hours(static_cast<long>(d.hours)); t += std::chrono::hours(24)) {
        (void)d.ems_for(t);
    }
}

std::vector<std::string> PreparedCity::station_ids() const
{
    std::vector<std::string> out;
    for (const auto& s : filled) {
        out.push_back(s.station.id);
    }
    return out;
}

std::optional<Tensor> PreparedCity::frame(std::int64_t index) const
{
    if (index < 0 || static_cast<std::size_t>(index) >= data->hours) {
        return std::nullopt;
    }
    const auto t = static_cast<std::size_t>(index);
    Tensor out({filled.size(), kPollutants});
    for (std::size_t s = 0; s < filled.size(); ++s) {
        for (std::size_t p = 0; p < kPollutants; ++p) {
            if (!filled[s].is_valid(t, p)) {
                return std::nullopt;
            }
            out.at(s, p) = normalize(filled[s].value(t, p), norm, p);
        }
    }
    return out;
}

std::size_t PreparedCity::grid_channels() const
{
    return met_stats.mean.size() + ems_stats.mean.size() + 2;
}

Tensor PreparedCity::grid_input(const GriddedField& met, const GriddedField& ems, InputMask mask) const
{
    const GridGeometry& g = data->geometry();
    if (met.geometry != g || ems.geometry != g) {
        throw ValidationError("meteorology and emission grids must share the city geometry");
    }
    const std::size_t cm = met_stats.mean.size();
    const std::size_t ce = ems_stats.mean.size();
    if (met.channels.size() != cm || ems.channels.size() != ce) {
        throw ValidationError("grid channel counts do not match the prepared city");
    }
    const std::size_t cells = g.cells();
    Tensor out({cm + ce + 2, g.n_lat, g.n_lon}, 0.0);
    if (mask.met) {
        for (std::size_t c = 0; c < cm; ++c) {
            for (std::size_t i = 0; i < cells; ++i) {
                out[c * cells + i] = (met.data[c * cells + i] - met_stats.mean[c]) / met_stats.std[c];
            }
        }
    }
    if (mask.ems) {
        for (std::size_t c = 0; c < ce; ++c) {
            for (std::size_t i = 0; i < cells; ++i) {
                out[(cm + c) * cells + i] = (ems.data[c * cells + i] - ems_stats.mean[c]) / ems_stats.std[c];
            }
        }
    }
    std::copy(grid_pe.data().begin(), grid_pe.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>((cm + ce) * cells));
    return out;
}

namespace {

template <typename Range>
ChannelStats channel_stats(const Range& fields)
{
    ChannelStats out;
    bool first = true;
    std::vector<double> sum, sq;
    std::size_t n = 0;
    for (const auto& f : fields) {
        const std::size_t c = f->channels.size();
        const std::size_t cells = f->geometry.cells();
        if (first) {
            sum.assign(c, 0.0);
            sq.assign(c, 0.0);
            first = false;
        }
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t i = 0; i < cells; ++i) {
                sum[k] += f->data[k * cells + i];
            }
        }
        n += cells;
    }
    out.mean.resize(sum.size());
    for (std::size_t k = 0; k < sum.size(); ++k) {
        out.mean[k] = sum[k] / static_cast<double>(n);
    }
    for (const auto& f : fields) {
        const std::size_t cells = f->geometry.cells();
        for (std::size_t k = 0; k < sum.size(); ++k) {
            for (std::size_t i = 0; i < cells; ++i) {
                const double d = f->data[k * cells + i] - out.mean[k];
                sq[k] += d * d;
            }
        }
    }
    out.std.resize(sum.size());
    for (std::size_t k = 0; k < sum.size(); ++k) {
        const double sd = std::sqrt(sq[k] / static_cast<double>(n));
        // A constant channel carries no information; leave it centred at zero.
        out.std[k] = sd > 0.0 ? sd : 1.0;
    }
    return out;
}

} // namespace

PreparedCity prepare_city(std::shared_ptr<const CityDataset> data, std::size_t max_gap)
{
    validate_dataset(*data);
    PreparedCity city;
    city.data = data;
    city.max_gap = max_gap;
    city.filled.reserve(data->series.size());
    for (const auto& s : data->series) {
        city.filled.push_back(fill_gaps(s, max_gap));
    }
    city.norm = compute_norm_stats(city.filled);
    city.met_stats = channel_stats(data->met);
    std::vector<std::shared_ptr<const GriddedField>> ems;
    for (const auto& [ym, f] : data->ems) {
        ems.push_back(f);
    }
    city.ems_stats = channel_stats(ems);

    const GridGeometry& g = data->geometry();
    const double lat_range = static_cast<double>(g.n_lat) * g.resolution;
    const double lon_range = static_cast<double>(g.n_lon) * g.resolution;
    double lat_sum = 0.0, lon_sum = 0.0;
    for (const auto& s : city.filled) {
        lat_sum += s.station.lat;
        lon_sum += s.station.lon;
    }
    city.ref_lat = lat_sum / static_cast<double>(city.filled.size());
    city.ref_lon = lon_sum / static_cast<double>(city.filled.size());

    city.site_pe = Tensor({city.filled.size(), 4});
    for (std::size_t s = 0; s < city.filled.size(); ++s) {
        const auto pe = relative_pe(city.filled[s].station.lat, city.filled[s].station.lon, city.ref_lat, city.ref_lon,
                                    lat_range, lon_range);
        for (std::size_t k = 0; k < 4; ++k) {
            city.site_pe.at(s, k) = pe[k];
        }
    }
    // Sub-degree offsets leave the raw encoding nearly constant across
    // stations, so each component is standardised over the city.
    const std::size_t n = city.filled.size();
    for (std::size_t k = 0; k < 4; ++k) {
        double mean = 0.0, var = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            mean += city.site_pe.at(s, k) / static_cast<double>(n);
        }
        for (std::size_t s = 0; s < n; ++s) {
            var += (city.site_pe.at(s, k) - mean) * (city.site_pe.at(s, k) - mean) / static_cast<double>(n);
        }
        const double sd = std::sqrt(var);
        for (std::size_t s = 0; s < n; ++s) {
            city.site_pe.at(s, k) = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? (city.site_pe.at(s, k) - mean) / sd : 0.0;
        }
    }
    city.grid_pe = Tensor({2, g.n_lat, g.n_lon});
    for (std::size_t r = 0; r < g.n_lat; ++r) {
        for (std::size_t c = 0; c < g.n_lon; ++c) {
            city.grid_pe.at(0, r, c) = (g.lat_of(r) - city.ref_lat) / lat_range;
            city.grid_pe.at(1, r, c) = (g.lon_of(c) - city.ref_lon) / lon_range;
        }
    }
    return city;
}

int met_offset(WindowKind kind)
{
    return kind == WindowKind::SixHour ? 6 : 3;
}

WindowSet build_windows(const PreparedCity& city, std::size_t stride, WindowKind kind)
{
    if (stride == 0) {
        throw ValidationError("window stride must be positive");
    }
    WindowSet out;
    const auto T = static_cast<std::int64_t>(city.data->hours);
    const std::int64_t first = kind == WindowKind::SixHour ? 6 : 0;
    for (std::int64_t t = first; t + 6 < T; t += static_cast<std::int64_t>(stride)) {
        ++out.candidates;
        const Hour anchor = city.data->start + std::chrono::hours(t);
        SampleWindow w;
        w.kind = kind;
        w.anchor = anchor;
        w.timecode = encode_time(anchor);
        std::optional<Tensor> a, b;
        if (kind == WindowKind::SixHour) {
            a = city.frame(t - 6);
            b = city.frame(t);
            auto target = city.frame(t + 6);
            if (!a || !b || !target) {
                ++out.dropped;
                continue;
            }
            w.target = std::move(*target);
        } else {
            a = city.frame(t);
            b = city.frame(t + 6);
            const std::size_t n = city.stations();
            Tensor target({5, n, kPollutants});
            bool ok = a && b;
            for (std::int64_t h = 1; ok && h <= 5; ++h) {
                auto f = city.frame(t + h);
                if (!f) {
                    ok = false;
                    break;
                }
                std::copy(f->data().begin(), f->data().end(),
                          target.data().begin() + static_cast<std::ptrdiff_t>((h - 1) * n * kPollutants));
            }
            if (!ok) {
                ++out.dropped;
                continue;
            }
            w.target = std::move(target);
        }
        w.x_prev = std::move(*a);
        w.x_curr = std::move(*b);
        w.met = city.data->met_ptr(anchor + std::chrono::hours(met_offset(kind)));
        w.ems = city.data->ems_for(anchor);
        out.windows.push_back(std::move(w));
    }
    if (out.windows.empty()) {
        log::warn("build_windows produced no windows (" + std::to_string(out.candidates) + " candidates, "
                  + std::to_string(out.dropped) + " dropped)");
    }
    return out;
}

} // namespace aircast
