#include "pivflow/net/tensor.hpp"

#include <sstream>

namespace pivflow::net {

long shape_numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
        if (d <= 0) throw Error("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.normal() * stddev;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
    }
    os << ']';
    return os.str();
}

} // namespace pivflow::net
