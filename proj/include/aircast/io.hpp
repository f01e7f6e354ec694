#pragma once

#include "aircast/data_model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aircast {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

void write_f64_blob(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_blob(const std::filesystem::path& path, std::size_t expected_count);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Quotes a CSV cell when it holds a comma, quote or newline.
std::string csv_field(std::string_view text);
/// Splits one CSV line, honouring double-quoted cells.
std::vector<std::string> split_csv_line(std::string_view line);

/// Station CSV: `time,station_id,lat,lon,so2,no2,co,o3,pm25,pm10`, empty cell = missing.
void write_station_csv(const std::filesystem::path& path, const std::vector<StationSeries>& series);
std::vector<StationSeries> read_station_csv(const std::filesystem::path& path);

/// Grid file pair: `<stem>.json` header plus `<stem>.bin` little-endian float32
/// payload, channel-major then row-major.
void write_grid(const std::filesystem::path& stem, const GriddedField& field);
GriddedField read_grid(const std::filesystem::path& stem);

/// Dataset directory: stations.csv, met/, ems/, dataset.json and, when
/// present, the embedded generator config in config.json.
void write_dataset(const std::filesystem::path& dir, const CityDataset& data);
CityDataset read_dataset(const std::filesystem::path& dir);

} // namespace aircast
