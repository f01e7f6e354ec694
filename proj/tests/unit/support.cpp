#include "support.hpp"

#include "aircast/error.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace aircast::test {

TempDir::TempDir()
{
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path()
            / ("aircast_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

SynthConfig tiny_synth(std::size_t days)
{
    SynthConfig c;
    c.city = "tiny";
    c.n_stations = 3;
    c.n_lat = 6;
    c.n_lon = 6;
    c.resolution = 0.25;
    c.days = days;
    c.met_channels = {"T2M", "U10M", "V10M"};
    c.ems_channels = {"NOx", "SO2"};
    return c;
}

std::shared_ptr<const CityDataset> tiny_dataset(std::uint64_t seed, const SynthConfig& cfg)
{
    return std::make_shared<const CityDataset>(synth_generate(cfg, seed));
}

PreparedCity tiny_city(std::uint64_t seed, const SynthConfig& cfg)
{
    return prepare_city(tiny_dataset(seed, cfg));
}

ModelConfig tiny_model(const PreparedCity& city, std::uint64_t seed)
{
    ModelConfig m;
    m.d_model = 8;
    m.temb_dim = 4;
    m.mlp_hidden = 12;
    m.resnet_depth = 1;
    m.resnet_width = 4;
    m.seed = seed;
    return model_config_for(city, m);
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> d(0.0, scale);
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = d(rng);
    }
    return t;
}

double store_gradcheck(nn::ParamStore& store, const std::function<nn::Var(nn::Graph&)>& build, std::uint64_t seed,
                       double h)
{
    std::mt19937_64 rng(seed);
    Tensor weights;
    auto eval = [&](bool track) {
        nn::Graph g(track);
        const nn::Var out = build(g);
        if (weights.empty()) {
            weights = random_tensor(out.shape(), rng);
        }
        const std::size_t m = out.value().size();
        const nn::Var loss =
            nn::reshape(nn::matmul(nn::reshape(out, {1, m}), g.constant(weights.reshaped({m, 1}))), {});
        if (track) {
            g.backward(loss);
        }
        return loss.value().item();
    };
    store.zero_grad();
    eval(true);
    double worst = 0.0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        nn::Parameter& p = store[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double orig = p.value[j];
            p.value[j] = orig + h;
            const double up = eval(false);
            p.value[j] = orig - h;
            const double down = eval(false);
            p.value[j] = orig;
            const double num = (up - down) / (2 * h);
            const double ana = p.grad[j];
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    return worst;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> list_files(const std::filesystem::path& dir)
{
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out.push_back(std::filesystem::relative(e.path(), dir).string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace ref {

Mat from(const Tensor& t)
{
    Mat m(t.dim(0), std::vector<double>(t.dim(1)));
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        for (std::size_t j = 0; j < t.dim(1); ++j) {
            m[i][j] = t.at(i, j);
        }
    }
    return m;
}

Mat matmul(const Mat& a, const Mat& b)
{
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b[0].size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < b.size(); ++k) {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    return c;
}

Mat transpose(const Mat& a)
{
    Mat t(a[0].size(), std::vector<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[0].size(); ++j) {
            t[j][i] = a[i][j];
        }
    }
    return t;
}

Mat add(const Mat& a, const Mat& b)
{
    Mat c = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[0].size(); ++j) {
            c[i][j] += b[i][j];
        }
    }
    return c;
}

Mat add_bias(const Mat& a, const Tensor& b)
{
    Mat c = a;
    for (auto& row : c) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] += b[j];
        }
    }
    return c;
}

Mat relu(Mat a)
{
    for (auto& row : a) {
        for (double& v : row) {
            v = v > 0.0 ? v : 0.0;
        }
    }
    return a;
}

Mat softmax_rows(Mat a)
{
    for (auto& row : a) {
        double total = 0.0;
        for (double& v : row) {
            v = std::exp(v);
            total += v;
        }
        for (double& v : row) {
            v /= total;
        }
    }
    return a;
}

Mat layer_norm_rows(const Mat& x, const Tensor& gain, const Tensor& bias, double eps)
{
    Mat y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(x[i].size());
        double mean = 0.0;
        for (double v : x[i]) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : x[i]) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        for (std::size_t j = 0; j < x[i].size(); ++j) {
            y[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
        }
    }
    return y;
}

Mat scale(Mat a, double s)
{
    for (auto& row : a) {
        for (double& v : row) {
            v *= s;
        }
    }
    return a;
}

std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t pad)
{
    const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0), k = w.dim(2);
    const std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
    std::vector<double> out(co * oh * ow, 0.0);
    for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double s = bias ? (*bias)[o] : 0.0;
                for (std::size_t c = 0; c < ci; ++c) {
                    for (std::size_t a = 0; a < k; ++a) {
                        for (std::size_t b = 0; b < k; ++b) {
                            const long r = static_cast<long>(i + a) - static_cast<long>(pad);
                            const long q = static_cast<long>(j + b) - static_cast<long>(pad);
                            if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) {
                                continue;
                            }
                            s += x[(c * h + static_cast<std::size_t>(r)) * wd + static_cast<std::size_t>(q)]
                                 * w[((o * ci + c) * k + a) * k + b];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = s;
            }
        }
    }
    return out;
}

double max_diff(const Mat& a, const Tensor& t)
{
    if (t.rank() != 2 || t.dim(0) != a.size() || t.dim(1) != a[0].size()) {
        throw ShapeError("reference shape mismatch");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[0].size(); ++j) {
            d = std::max(d, std::abs(a[i][j] - t.at(i, j)));
        }
    }
    return d;
}

} // namespace ref

} // namespace aircast::test
