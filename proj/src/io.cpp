#include "aircast/io.hpp"

#include "aircast/error.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace aircast {

namespace fs = std::filesystem;
static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifactError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

void write_f64_blob(const fs::path& path, std::span<const double> values)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

std::vector<double> read_f64_blob(const fs::path& path, std::size_t expected_count)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifactError("cannot open " + path.string());
    }
    std::vector<double> out(expected_count);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected_count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(expected_count * sizeof(double)) || in.peek() != EOF) {
        throw IoError(path.string() + ": expected " + std::to_string(expected_count) + " float64 values");
    }
    return out;
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) {
        throw IoError("cannot format number");
    }
    return std::string(buf, ptr);
}

std::string csv_field(std::string_view text)
{
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(text);
    }
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) {
        throw ValidationError("unterminated quote in CSV line");
    }
    cells.push_back(std::move(cur));
    return cells;
}

namespace {

constexpr std::string_view kStationHeader = "time,station_id,lat,lon,so2,no2,co,o3,pm25,pm10";

double parse_double(const std::string& s, const std::string& context)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValidationError(context + ": cannot parse number '" + s + "'");
    }
    return v;
}

} // namespace

void write_station_csv(const fs::path& path, const std::vector<StationSeries>& series)
{
    std::string out(kStationHeader);
    out += '\n';
    if (!series.empty()) {
        const std::size_t T = series.front().hours();
        for (std::size_t t = 0; t < T; ++t) {
            for (const auto& s : series) {
                out += format_hour(s.start + std::chrono::hours(static_cast<long>(t)));
                out += ',' + csv_field(s.station.id) + ',' + format_double(s.station.lat) + ',' + format_double(s.station.lon);
                for (std::size_t p = 0; p < kPollutants; ++p) {
                    out += ',';
                    if (s.is_valid(t, p)) {
                        out += format_double(s.value(t, p));
                    }
                }
                out += '\n';
            }
        }
    }
    write_text_file(path, out);
}

std::vector<StationSeries> read_station_csv(const fs::path& path)
{
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(std::string(kStationHeader))) {
        throw ValidationError(path.string() + ": expected header '" + std::string(kStationHeader) + "'");
    }
    struct Row {
        Hour time;
        std::array<std::optional<double>, kPollutants> v;
    };
    std::vector<std::string> order;
    std::map<std::string, Station> stations;
    std::map<std::string, std::vector<Row>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != 10) {
            throw ValidationError(ctx + ": expected 10 columns, got " + std::to_string(cells.size()));
        }
        Station st{cells[1], parse_double(cells[2], ctx), parse_double(cells[3], ctx)};
        validate_station(st);
        if (auto it = stations.find(st.id); it == stations.end()) {
            order.push_back(st.id);
            stations.emplace(st.id, st);
        } else if (it->second.lat != st.lat || it->second.lon != st.lon) {
            throw ValidationError(ctx + ": station '" + st.id + "' changes coordinates");
        }
        Row r{parse_hour(cells[0]), {}};
        for (std::size_t p = 0; p < kPollutants; ++p) {
            if (!cells[4 + p].empty()) {
                r.v[p] = parse_double(cells[4 + p], ctx);
            }
        }
        rows[st.id].push_back(r);
    }
    if (order.empty()) {
        return {};
    }
    Hour first = Hour::max(), last = Hour::min();
    for (const auto& [id, rs] : rows) {
        for (const auto& r : rs) {
            first = std::min(first, r.time);
            last = std::max(last, r.time);
        }
    }
    const auto T = static_cast<std::size_t>(hours_between(first, last) + 1);
    std::vector<StationSeries> out;
    for (const auto& id : order) {
        StationSeries s(stations.at(id), first, T);
        for (const auto& r : rows.at(id)) {
            const auto t = static_cast<std::size_t>(hours_between(first, r.time));
            for (std::size_t p = 0; p < kPollutants; ++p) {
                if (r.v[p]) {
                    s.set(t, p, *r.v[p]);
                }
            }
        }
        validate_series(s);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix)
{
    return fs::path(stem.string() + suffix);
}

} // namespace

void write_grid(const fs::path& stem, const GriddedField& field)
{
    validate_field(field);
    nlohmann::ordered_json h;
    h["origin_lat"] = field.geometry.origin_lat;
    h["origin_lon"] = field.geometry.origin_lon;
    h["resolution"] = field.geometry.resolution;
    h["n_lat"] = field.geometry.n_lat;
    h["n_lon"] = field.geometry.n_lon;
    h["channels"] = field.channels;
    h["time"] = format_hour(field.time);
    write_text_file(with_suffix(stem, ".json"), h.dump() + "\n");

    std::vector<float> payload(field.data.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        payload[i] = static_cast<float>(field.data[i]);
    }
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + with_suffix(stem, ".bin").string());
    }
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

GriddedField read_grid(const fs::path& stem)
{
    const auto h = nlohmann::json::parse(read_text_file(with_suffix(stem, ".json")));
    GridGeometry g{h.at("origin_lat").get<double>(), h.at("origin_lon").get<double>(), h.at("resolution").get<double>(),
                   h.at("n_lat").get<std::size_t>(), h.at("n_lon").get<std::size_t>()};
    GriddedField f(g, h.at("channels").get<std::vector<std::string>>(), parse_hour(h.at("time").get<std::string>()));
    const auto bin = with_suffix(stem, ".bin");
    std::ifstream in(bin, std::ios::binary);
    if (!in) {
        throw MissingArtifactError("cannot open " + bin.string());
    }
    std::vector<float> payload(f.data.size());
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)) || in.peek() != EOF) {
        throw IoError(bin.string() + ": payload size does not match header dims");
    }
    for (std::size_t i = 0; i < payload.size(); ++i) {
        f.data[i] = static_cast<double>(payload[i]);
    }
    validate_field(f);
    return f;
}

namespace {

std::string month_stem(YearMonth ym)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02u", ym.year, ym.month);
    return buf;
}

} // namespace

void write_dataset(const fs::path& dir, const CityDataset& data)
{
    validate_dataset(data);
    fs::create_directories(dir / "met");
    fs::create_directories(dir / "ems");
    write_station_csv(dir / "stations.csv", data.series);
    for (const auto& f : data.met) {
        write_grid(dir / "met" / compact_hour(f->time), *f);
    }
    nlohmann::ordered_json months = nlohmann::ordered_json::array();
    for (const auto& [ym, f] : data.ems) {
        write_grid(dir / "ems" / month_stem(ym), *f);
        months.push_back(month_stem(ym));
    }
    nlohmann::ordered_json idx;
    idx["city"] = data.city;
    idx["start"] = format_hour(data.start);
    idx["hours"] = data.hours;
    idx["ems_months"] = months;
    write_text_file(dir / "dataset.json", idx.dump(2) + "\n");
    if (!data.embedded_config.empty()) {
        write_text_file(dir / "config.json", data.embedded_config);
    }
}

CityDataset read_dataset(const fs::path& dir)
{
    if (!fs::exists(dir / "dataset.json")) {
        throw MissingArtifactError("dataset index not found: " + (dir / "dataset.json").string());
    }
    const auto idx = nlohmann::json::parse(read_text_file(dir / "dataset.json"));
    CityDataset d;
    d.city = idx.at("city").get<std::string>();
    d.start = parse_hour(idx.at("start").get<std::string>());
    d.hours = idx.at("hours").get<std::size_t>();
    d.series = read_station_csv(dir / "stations.csv");
    for (std::size_t t = 0; t < d.hours; ++t) {
        const Hour h = d.start + std::chrono::hours(static_cast<long>(t));
        d.met.push_back(std::make_shared<const GriddedField>(read_grid(dir / "met" / compact_hour(h))));
    }
    for (const auto& m : idx.at("ems_months")) {
        auto f = std::make_shared<const GriddedField>(read_grid(dir / "ems" / m.get<std::string>()));
        d.ems.emplace(year_month(f->time), std::move(f));
    }
    if (fs::exists(dir / "config.json")) {
        d.embedded_config = read_text_file(dir / "config.json");
    }
    validate_dataset(d);
    return d;
}

} // namespace aircast
