// SPDX-License-Identifier: Apache-2.0
#include "gnndt/ad/tape.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>

namespace gnndt::ad {

namespace {

struct Fnv {
    std::uint64_t h = 1469598103934665603ULL;
    void feed(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t k = 0; k < n; ++k) {
            h ^= p[k];
            h *= 1099511628211ULL;
        }
    }
};

}  // namespace

template <class T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Matrix<T> init, bool decay) {
    if (name.empty()) throw std::invalid_argument("parameter name must be non-empty");
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->grad = Matrix<T>(init.rows, init.cols);
    p->value = std::move(init);
    p->decay = decay;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

template <class T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

template <class T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

template <class T>
Parameter<T>& ParameterStore<T>::at(const std::string& name) {
    auto* p = find(name);
    if (!p) throw std::out_of_range("unknown parameter '" + name + "'");
    return *p;
}

template <class T>
const Parameter<T>& ParameterStore<T>::at(const std::string& name) const {
    const auto* p = find(name);
    if (!p) throw std::out_of_range("unknown parameter '" + name + "'");
    return *p;
}

template <class T>
std::vector<Parameter<T>*> ParameterStore<T>::all() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

template <class T>
std::vector<const Parameter<T>*> ParameterStore<T>::all() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

template <class T>
std::size_t ParameterStore<T>::num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) {
        if (!p->grad.same_shape(p->value)) p->grad = Matrix<T>(p->value.rows, p->value.cols);
        std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
    }
}

template <class T>
std::string ParameterStore<T>::digest() const {
    Fnv f;
    for (const auto& p : params_) {
        f.feed(p->name.data(), p->name.size());
        const std::int32_t dims[2] = {p->value.rows, p->value.cols};
        f.feed(dims, sizeof(dims));
        f.feed(p->value.data.data(), p->value.size() * sizeof(T));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(f.h));
    return buf;
}

template <class T>
Tensor<T> Tape<T>::constant(Matrix<T> value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Tensor<T> Tape<T>::variable(Matrix<T> value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Tensor<T> Tape<T>::param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.value = p.value;
    n.requires_grad = grad_enabled_;
    n.param = &p;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_[&p] = id;
    return {this, id};
}

template <class T>
Tensor<T> Tape<T>::record(Matrix<T> value, std::initializer_list<int> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<int>(inputs), std::move(backward));
}

template <class T>
Tensor<T> Tape<T>::record(Matrix<T> value, const std::vector<int>& inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        for (int in : inputs) {
            if (in < 0 || in >= static_cast<int>(nodes_.size())) throw std::logic_error("op input not on this tape");
            if (nodes_[in].requires_grad) n.requires_grad = true;
        }
        if (n.requires_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Matrix<T>& Tape<T>::grad(int id) {
    Node& n = nodes_.at(id);
    if (!n.grad.same_shape(n.value)) n.grad = Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
}

template <class T>
void Tape<T>::backward(Tensor<T> loss) {
    if (loss.tape != this) throw std::logic_error("loss is not on this tape");
    const Node& ln = nodes_.at(loss.id);
    if (ln.value.rows != 1 || ln.value.cols != 1) throw ShapeError("backward on non-scalar " + ln.value.shape_str());
    if (!ln.requires_grad) return;
    grad(loss.id).data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
        n.backward(*this, id);
    }
    for (auto& [p, id] : param_nodes_) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        auto* mp = const_cast<Parameter<T>*>(p);
        if (!mp->grad.same_shape(mp->value)) mp->grad = Matrix<T>(mp->value.rows, mp->value.cols);
        for (std::size_t k = 0; k < n.grad.size(); ++k) mp->grad.data[k] += n.grad.data[k];
    }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace gnndt::ad
