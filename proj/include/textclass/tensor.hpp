#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "textclass/errors.hpp"

namespace textclass {

// Dense row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
// All numerics in the library run in double precision.
class Tensor {
public:
    Tensor() : rows_(0), cols_(0) {}
    Tensor(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(size_t rows, size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("tensor: data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
    }

    static Tensor row_vector(std::vector<double> data) {
        size_t n = data.size();
        return Tensor(1, n, std::move(data));
    }
    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

private:
    size_t rows_, cols_;
    std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace textclass
