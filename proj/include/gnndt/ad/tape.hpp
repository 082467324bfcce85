// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnndt/ad/matrix.hpp"

namespace gnndt::ad {

class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Trainable tensor living outside any tape. Gradients accumulate across backward calls until cleared.
template <class T>
struct Parameter {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    bool decay = true;  // subject to decoupled weight decay
};

template <class T>
class ParameterStore {
public:
    Parameter<T>& add(const std::string& name, Matrix<T> init, bool decay = true);
    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;
    Parameter<T>& at(const std::string& name);
    const Parameter<T>& at(const std::string& name) const;

    std::vector<Parameter<T>*> all();
    std::vector<const Parameter<T>*> all() const;
    std::size_t num_tensors() const { return params_.size(); }
    std::size_t num_scalars() const;
    void zero_grad();
    /// FNV-1a over names, shapes and raw value bytes.
    std::string digest() const;

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Tape;

/// Handle to a tape node.
template <class T>
struct Tensor {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Matrix<T>& value() const;
    int rows() const { return value().rows; }
    int cols() const { return value().cols; }
    T item() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

template <class T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    struct Node {
        Matrix<T> value;
        Matrix<T> grad;  // empty until touched by backward
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
        BackwardFn backward;
    };

    /// With grad disabled nothing is retained for backward (inference mode).
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor<T> constant(Matrix<T> value);
    Tensor<T> variable(Matrix<T> value);
    /// One node per parameter per tape; repeated uses share it.
    Tensor<T> param(Parameter<T>& p);

    /// Appends an op result. The node requires grad iff any input does and grad is enabled.
    Tensor<T> record(Matrix<T> value, std::initializer_list<int> inputs, BackwardFn backward);
    Tensor<T> record(Matrix<T> value, const std::vector<int>& inputs, BackwardFn backward);

    /// Reverse sweep from a 1x1 loss. Parameter gradients are added into Parameter::grad.
    void backward(Tensor<T> loss);

    const Matrix<T>& value(int id) const { return nodes_.at(id).value; }
    bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
    /// Gradient buffer of a node, allocated as zeros on first access.
    Matrix<T>& grad(int id);
    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

private:
    bool grad_enabled_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter<T>*, int> param_nodes_;
};

template <class T>
const Matrix<T>& Tensor<T>::value() const {
    if (!valid()) throw std::logic_error("empty tensor handle");
    return tape->value(id);
}

template <class T>
T Tensor<T>::item() const {
    const auto& v = value();
    if (v.size() != 1) throw ShapeError("item() on non-scalar " + v.shape_str());
    return v.data[0];
}

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace gnndt::ad
