// Named collections of trainable tensors plus init helpers.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "unmt/rng.hpp"
#include "unmt/tensor.hpp"

namespace unmt {

class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw std::invalid_argument("param already exists: " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
        return items_.back().second;
    }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no such param: " + name);
        return items_[it->second].second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no such param: " + name);
        return items_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    size_t total_elements() const {
        size_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

    // Value snapshot for update-set and determinism tests.
    std::map<std::string, std::vector<double>> snapshot() const {
        std::map<std::string, std::vector<double>> s;
        for (const auto& [name, t] : items_) s[name] = t.value();
        return s;
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, size_t> index_;
};

inline Tensor xavier_uniform(Shape shape, Rng& rng) {
    const size_t fan_in = shape.size() == 2 ? shape[0] : shape[0];
    const size_t fan_out = shape.size() == 2 ? shape[1] : shape[0];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (double& v : t.value()) v = rand_uniform(rng, -bound, bound);
    return t;
}

inline Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (double& v : t.value()) v = rand_normal(rng) * stddev;
    return t;
}

inline Tensor const_init(Shape shape, double fill) {
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (double& v : t.value()) v = fill;
    return t;
}

}  // namespace unmt
