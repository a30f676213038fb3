#include "gembed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace gembed {

std::string shape_str(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(shape[i]);
    }
    return out;
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

bool all_finite(const std::vector<double>& values) {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

TensorPtr Tensor::make(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " data entries");
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return make(std::move(shape), std::move(data), requires_grad);
}

TensorPtr Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), value);
    return make(std::move(shape), std::move(data), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return make({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw ShapeError("rows() needs a matrix, got " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw ShapeError("cols() needs a matrix, got " + shape_str(shape));
    return shape[1];
}

double Tensor::item() const {
    if (data.size() != 1) throw ShapeError("item() needs a scalar, got " + shape_str(shape));
    return data[0];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

void Tensor::backward() {
    if (data.size() != 1) {
        throw ShapeError("backward() starts from a scalar, got " + shape_str(shape));
    }
    // Iterative DFS to build a topological order over the recorded graph.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    struct Frame {
        Tensor* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({this, 0});
    visited.insert(this);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    for (Tensor* t : order) t->ensure_grad();
    grad[0] = 1.0;
    for (auto it = order.rbegin(), end = order.rend(); it != end; ++it) {
        Tensor* t = *it;
        if (t->backward_step) t->backward_step(*t);
    }
}

TensorPtr make_node(std::vector<std::size_t> shape, std::vector<double> data, const char* op,
                    std::vector<TensorPtr> parents,
                    std::function<void(Tensor&)> backward_step) {
    bool needs_grad = std::any_of(parents.begin(), parents.end(),
                                  [](const TensorPtr& p) { return p->requires_grad; });
    auto t = Tensor::make(std::move(shape), std::move(data));
    t->op = op;
    if (needs_grad) {
        t->requires_grad = true;
        t->parents = std::move(parents);
        t->backward_step = std::move(backward_step);
    }
    return t;
}

namespace {

void require_matrix(const TensorPtr& t, const char* op) {
    if (t->shape.size() != 2) {
        throw ShapeError(std::string(op) + " needs a matrix, got " + shape_str(t->shape));
    }
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    if (b->shape[0] != k) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a->shape) +
                         " vs " + shape_str(b->shape));
    }
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a->data[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &b->data[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_node({m, n}, std::move(out), "matmul", {a, b}, [a, b, m, k, n](Tensor& t) {
        if (a->requires_grad) {
            a->ensure_grad();
            // dA += G * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += t.grad[i * n + j] * b->data[p * n + j];
                    }
                    a->grad[i * k + p] += acc;
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // dB += A^T * G
            for (std::size_t p = 0; p < k; ++p) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double av = a->data[i * k + p];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        b->grad[p * n + j] += av * t.grad[i * n + j];
                    }
                }
            }
        }
    });
}

TensorPtr transpose(const TensorPtr& x) {
    require_matrix(x, "transpose");
    const std::size_t m = x->shape[0], n = x->shape[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x->data[i * n + j];
    return make_node({n, m}, std::move(out), "transpose", {x}, [x, m, n](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += t.grad[j * m + i];
    });
}

TensorPtr row_softmax(const TensorPtr& x) {
    require_matrix(x, "row_softmax");
    if (!all_finite(x->data)) throw NumericalError("row_softmax input is not finite");
    const std::size_t m = x->shape[0], n = x->shape[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &x->data[i * n];
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            sum += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
    }
    return make_node({m, n}, std::move(out), "row_softmax", {x}, [x, m, n](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        // dx_j = y_j * (g_j - sum_k g_k y_k), per row
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = &t.data[i * n];
            const double* g = &t.grad[i * n];
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += y[j] * (g[j] - dot);
        }
    });
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x->shape[0], d = x->shape[1];
    if (d < 2) {
        throw ShapeError("layer_norm over a single feature is degenerate (width " +
                         std::to_string(d) + ")");
    }
    if (eps <= 0.0) throw ConfigError("layer_norm eps must be positive");
    if (gain->size() != d || bias->size() != d) {
        throw ShapeError("layer_norm gain/bias width " + std::to_string(gain->size()) + "/" +
                         std::to_string(bias->size()) + " does not match feature width " +
                         std::to_string(d));
    }
    std::vector<double> out(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &x->data[i * d];
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = gain->data[j] * (row[j] - mean) * inv + bias->data[j];
        }
    }
    return make_node({m, d}, std::move(out), "layer_norm", {x, gain, bias},
                   [x, gain, bias, m, d, eps](Tensor& t) {
        const double dd = static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = &x->data[i * d];
            const double* g = &t.grad[i * d];
            double mean = 0.0;
            for (std::size_t j = 0; j < d; ++j) mean += row[j];
            mean /= dd;
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= dd;
            const double inv = 1.0 / std::sqrt(var + eps);
            if (gain->requires_grad) {
                gain->ensure_grad();
                for (std::size_t j = 0; j < d; ++j) {
                    gain->grad[j] += g[j] * (row[j] - mean) * inv;
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t j = 0; j < d; ++j) bias->grad[j] += g[j];
            }
            if (x->requires_grad) {
                x->ensure_grad();
                double dvar = 0.0, dmean = 0.0, centered_sum = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxhat = g[j] * gain->data[j];
                    dvar += dxhat * (row[j] - mean);
                    dmean -= dxhat;
                    centered_sum += row[j] - mean;
                }
                dvar *= -0.5 * inv * inv * inv;
                dmean = dmean * inv + dvar * (-2.0 / dd) * centered_sum;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxhat = g[j] * gain->data[j];
                    x->grad[i * d + j] +=
                        dxhat * inv + dvar * 2.0 * (row[j] - mean) / dd + dmean / dd;
                }
            }
        }
    });
}

namespace {

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a->shape) +
                         " vs " + shape_str(b->shape));
    }
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    return make_node(a->shape, std::move(out), "add", {a, b}, [a, b](Tensor& t) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < t.grad.size(); ++i) a->grad[i] += t.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < t.grad.size(); ++i) b->grad[i] += t.grad[i];
        }
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    return make_node(a->shape, std::move(out), "mul", {a, b}, [a, b](Tensor& t) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < t.grad.size(); ++i) a->grad[i] += t.grad[i] * b->data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < t.grad.size(); ++i) b->grad[i] += t.grad[i] * a->data[i];
        }
    });
}

TensorPtr relu(const TensorPtr& x) {
    std::vector<double> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    return make_node(x->shape, std::move(out), "relu", {x}, [x](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        // subgradient 0 at 0
        for (std::size_t i = 0; i < t.grad.size(); ++i) {
            if (x->data[i] > 0.0) x->grad[i] += t.grad[i];
        }
    });
}

TensorPtr scale(const TensorPtr& x, double factor) {
    std::vector<double> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] * factor;
    return make_node(x->shape, std::move(out), "scale", {x}, [x, factor](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < t.grad.size(); ++i) x->grad[i] += t.grad[i] * factor;
    });
}

TensorPtr concat_last_axis(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    require_matrix(parts[0], "concat");
    const std::size_t m = parts[0]->shape[0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat");
        if (p->shape[0] != m) {
            throw ShapeError("concat row mismatch: " + shape_str(parts[0]->shape) + " vs " +
                             shape_str(p->shape));
        }
        total += p->shape[1];
    }
    std::vector<double> out(m * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p->shape[1];
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(&p->data[i * w], w, &out[i * total + off]);
        }
        off += w;
    }
    return make_node({m, total}, std::move(out), "concat", parts, [parts, m, total](Tensor& t) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t w = p->shape[1];
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        p->grad[i * w + j] += t.grad[i * total + off + j];
                    }
                }
            }
            off += w;
        }
    });
}

TensorPtr add_row_vector(const TensorPtr& x, const TensorPtr& v) {
    require_matrix(x, "add_row_vector");
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (v->size() != n) {
        throw ShapeError("add_row_vector width mismatch: " + shape_str(x->shape) + " vs " +
                         shape_str(v->shape));
    }
    std::vector<double> out(x->size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x->data[i * n + j] + v->data[j];
    return make_node({m, n}, std::move(out), "add_row_vector", {x, v}, [x, v, m, n](Tensor& t) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < t.grad.size(); ++i) x->grad[i] += t.grad[i];
        }
        if (v->requires_grad) {
            v->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) v->grad[j] += t.grad[i * n + j];
        }
    });
}

TensorPtr sum_all(const TensorPtr& x) {
    double total = 0.0;
    for (double v : x->data) total += v;
    return make_node({1}, {total}, "sum", {x}, [x](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += t.grad[0];
    });
}

TensorPtr mask_diagonal(const TensorPtr& x, double value) {
    require_matrix(x, "mask_diagonal");
    const std::size_t m = x->shape[0], n = x->shape[1];
    std::vector<double> out = x->data;
    for (std::size_t i = 0; i < std::min(m, n); ++i) out[i * n + i] = value;
    return make_node({m, n}, std::move(out), "mask_diagonal", {x}, [x, m, n](Tensor& t) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) x->grad[i * n + j] += t.grad[i * n + j];
            }
        }
    });
}

// ---- Rng ------------------------------------------------------------------

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw ConfigError("Rng::below(0)");
    // rejection sampling keeps the draw exactly uniform
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
}

Rng Rng::split() { return Rng(next_u64()); }

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw ConfigError("cannot draw " + std::to_string(k) + " distinct values from " +
                                 std::to_string(n));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[i + below(n - i)]);
    }
    pool.resize(k);
    return pool;
}

TensorPtr random_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi,
                         bool requires_grad) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor::make(std::move(shape), std::move(data), requires_grad);
}

TensorPtr random_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double sigma,
                        bool requires_grad) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = mean + sigma * rng.normal();
    return Tensor::make(std::move(shape), std::move(data), requires_grad);
}

// ---- grad_check -------------------------------------------------------------

GradCheckReport grad_check(const std::function<TensorPtr()>& f,
                           const std::vector<std::pair<std::string, TensorPtr>>& params,
                           double h, double tol) {
    if (!(h >= 1e-7 && h <= 1e-3)) {
        throw ConfigError("grad_check step size must lie in [1e-7, 1e-3]");
    }
    for (const auto& [name, p] : params) {
        if (!p->requires_grad) {
            throw ConfigError("grad_check parameter '" + name + "' does not require grad");
        }
        p->zero_grad();
    }
    TensorPtr loss = f();
    if (!all_finite(loss->data)) throw NumericalError("grad_check objective is not finite");
    loss->backward();

    auto eval = [&]() {
        TensorPtr out = f();
        if (!all_finite(out->data)) throw NumericalError("grad_check objective is not finite");
        return out->item();
    };

    GradCheckReport report;
    report.tolerance = tol;
    for (const auto& [name, p] : params) {
        p->ensure_grad();
        const std::vector<double> analytic = p->grad;
        double worst = 0.0;
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + h;
            const double up = eval();
            p->data[i] = saved - h;
            const double down = eval();
            p->data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic[i] - numeric) /
                               std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
        report.groups.push_back({name, worst});
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    report.passed = report.max_rel_err <= tol;
    return report;
}

}  // namespace gembed
