#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gembed/error.hpp"

namespace gembed {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major f64 tensor that doubles as a node in the reverse-mode
/// differentiation graph. Tensors are treated as immutable once an op has
/// produced them; parameters are the only tensors mutated in place (by the
/// optimizer, between forward passes).
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data once touched by backward
    bool requires_grad = false;

    // graph edges, set by the op that produced this tensor
    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_step;  // pushes this->grad into parents
    const char* op = "leaf";

    static TensorPtr make(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
    static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<std::size_t> shape, double value,
                          bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    double item() const;  // scalar tensors only

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    void ensure_grad();  // allocate + zero the grad slot
    void zero_grad();

    /// Reverse-mode sweep from a scalar output: seeds grad with 1 and replays
    /// the recorded graph in reverse topological order, accumulating into
    /// every reachable tensor with requires_grad.
    void backward();
};

std::string shape_str(const std::vector<std::size_t>& shape);
std::size_t shape_numel(const std::vector<std::size_t>& shape);
bool all_finite(const std::vector<double>& values);

// ---- ops --------------------------------------------------------------

/// Builds a graph node for a custom (fused) op. The backward_step closure is
/// installed only if some parent requires grad; it must accumulate (+=) into
/// parent grads, never overwrite.
TensorPtr make_node(std::vector<std::size_t> shape, std::vector<double> data, const char* op,
                    std::vector<TensorPtr> parents,
                    std::function<void(Tensor&)> backward_step);

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& x);
TensorPtr row_softmax(const TensorPtr& x);
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps = 1e-5);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr relu(const TensorPtr& x);
TensorPtr scale(const TensorPtr& x, double factor);
TensorPtr concat_last_axis(const std::vector<TensorPtr>& parts);
TensorPtr add_row_vector(const TensorPtr& x, const TensorPtr& v);
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mask_diagonal(const TensorPtr& x, double value);

// ---- deterministic RNG --------------------------------------------------

/// Counter-based 64-bit generator (splitmix64). Identical seeds give
/// identical sequences on every platform; distributions are hand-rolled so
/// no standard-library variability leaks in.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double uniform();                         // [0, 1)
    double uniform(double lo, double hi);     // [lo, hi)
    double normal();                          // standard normal, Box-Muller
    std::size_t below(std::size_t n);         // unbiased draw from [0, n)
    Rng split();                              // independent child stream

    /// Partial Fisher-Yates draw of k distinct values from [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t state_;
};

TensorPtr random_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi,
                         bool requires_grad = false);
TensorPtr random_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double sigma,
                        bool requires_grad = false);

// ---- gradient verification ----------------------------------------------

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares the reverse-mode gradient of f() against central finite
/// differences (f(p+h) - f(p-h)) / 2h for every entry of every listed
/// parameter. f must rebuild its graph from the current parameter values on
/// each call. Relative error uses |a-b| / max(1e-8, |a|+|b|).
GradCheckReport grad_check(const std::function<TensorPtr()>& f,
                           const std::vector<std::pair<std::string, TensorPtr>>& params,
                           double h, double tol);

}  // namespace gembed
