#include "aircast/params.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace aircast::nn {

Parameter& ParamStore::create(const std::string& name, Tensor init)
{
    if (index_.contains(name)) {
        throw ValidationError("duplicate parameter name '" + name + "'");
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Tensor(init.shape(), 0.0);
    p->first_moment = Tensor(init.shape(), 0.0);
    p->second_moment = Tensor(init.shape(), 0.0);
    p->value = std::move(init);
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name)
{
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ValidationError("unknown parameter '" + name + "'");
    }
    return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ValidationError("unknown parameter '" + name + "'");
    }
    return *params_[it->second];
}

bool ParamStore::contains(const std::string& name) const
{
    return index_.contains(name);
}

std::size_t ParamStore::element_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p->value.size();
    }
    return n;
}

void ParamStore::zero_grad()
{
    for (auto& p : params_) {
        p->grad.fill(0.0);
    }
}

double ParamStore::grad_norm() const
{
    double sq = 0.0;
    for (const auto& p : params_) {
        for (double g : p->grad.data()) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

void ParamStore::scale_grad(double s)
{
    for (auto& p : params_) {
        p->grad *= s;
    }
}

void ParamStore::copy_values_from(const ParamStore& other)
{
    if (other.size() != size()) {
        throw ShapeError("parameter store layout mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i]->name != other[i].name || params_[i]->value.shape() != other[i].value.shape()) {
            throw ShapeError("parameter store layout mismatch at '" + params_[i]->name + "'");
        }
        params_[i]->value = other[i].value;
    }
}

void adam_step(ParamStore& params, const AdamConfig& cfg)
{
    params.step += 1;
    const double t = static_cast<double>(params.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (p.grad.size() != p.value.size()) {
            throw ShapeError("gradient for '" + p.name + "' has shape " + shape_string(p.grad.shape())
                             + ", parameter has " + shape_string(p.value.shape()));
        }
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            p.first_moment[j] = cfg.beta1 * p.first_moment[j] + (1.0 - cfg.beta1) * g;
            p.second_moment[j] = cfg.beta2 * p.second_moment[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.first_moment[j] / c1;
            const double vhat = p.second_moment[j] / c2;
            p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

namespace {

std::string blob_name(std::size_t index, const char* suffix)
{
    return "tensor_" + std::to_string(index) + suffix + ".f64";
}

} // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "aircast-checkpoint-v1";
    manifest["step"] = params.step;
    manifest["params"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Parameter& p = params[i];
        nlohmann::ordered_json entry;
        entry["name"] = p.name;
        entry["shape"] = p.value.shape();
        entry["value"] = blob_name(i, "");
        entry["first_moment"] = blob_name(i, "_m");
        entry["second_moment"] = blob_name(i, "_v");
        write_f64_blob(dir / blob_name(i, ""), p.value.data());
        write_f64_blob(dir / blob_name(i, "_m"), p.first_moment.data());
        write_f64_blob(dir / blob_name(i, "_v"), p.second_moment.data());
        manifest["params"].push_back(std::move(entry));
    }
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void load_checkpoint(ParamStore& params, const std::filesystem::path& dir)
{
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw MissingArtifactError("checkpoint manifest not found: " + manifest_path.string());
    }
    const auto manifest = nlohmann::json::parse(read_text_file(manifest_path));
    const auto& entries = manifest.at("params");
    if (entries.size() != params.size()) {
        throw ValidationError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects "
                              + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        const auto& e = entries[i];
        const auto shape = e.at("shape").get<Shape>();
        if (e.at("name").get<std::string>() != p.name || shape != p.value.shape()) {
            throw ValidationError("checkpoint tensor " + std::to_string(i) + " ('" + e.at("name").get<std::string>()
                                  + "') does not match model parameter '" + p.name + "'");
        }
        p.value = Tensor(shape, read_f64_blob(dir / e.at("value").get<std::string>(), shape_size(shape)));
        p.first_moment = Tensor(shape, read_f64_blob(dir / e.at("first_moment").get<std::string>(), shape_size(shape)));
        p.second_moment =
            Tensor(shape, read_f64_blob(dir / e.at("second_moment").get<std::string>(), shape_size(shape)));
        p.grad = Tensor(shape, 0.0);
    }
    params.step = manifest.at("step").get<std::int64_t>();
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

} // namespace aircast::nn
