#pragma once

#include "aircast/data_model.hpp"
#include "aircast/model.hpp"
#include "aircast/synth.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace aircast::test {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// A 3-station, 6x6-grid city over `days` days with few channels.
SynthConfig tiny_synth(std::size_t days = 12);
std::shared_ptr<const CityDataset> tiny_dataset(std::uint64_t seed = 1, const SynthConfig& cfg = tiny_synth());
PreparedCity tiny_city(std::uint64_t seed = 1, const SynthConfig& cfg = tiny_synth());
ModelConfig tiny_model(const PreparedCity& city, std::uint64_t seed = 3);

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0);

/// Max relative error between backward() and central differences of a random
/// linear functional of `build`'s output, over every element of `store`.
double store_gradcheck(nn::ParamStore& store, const std::function<nn::Var(nn::Graph&)>& build,
                       std::uint64_t seed = 5, double h = 1e-5);

/// Reads the whole file as bytes.
std::string slurp(const std::filesystem::path& p);
/// Relative paths of every regular file below `dir`, sorted.
std::vector<std::string> list_files(const std::filesystem::path& dir);

// Plain nested-loop reference implementations on row-major vectors.
namespace ref {

using Mat = std::vector<std::vector<double>>;

Mat from(const Tensor& t);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add(const Mat& a, const Mat& b);
Mat add_bias(const Mat& a, const Tensor& b);
Mat relu(Mat a);
Mat softmax_rows(Mat a);
Mat layer_norm_rows(const Mat& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Mat scale(Mat a, double s);
/// x[ci][i][j], w[co][ci][k][k] as flat tensors; zero padding `pad`, stride 1.
std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t pad);
double max_diff(const Mat& a, const Tensor& t);

} // namespace ref

} // namespace aircast::test
