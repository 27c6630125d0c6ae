#include "pivflow/net/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <Eigen/Core>

namespace pivflow::net {

namespace {

thread_local bool g_grad_enabled = true;

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Variable&)> backward_fn) {
    auto node = std::make_shared<Variable>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool needs = false;
        for (const Var& p : parents) needs = needs || p->requires_grad;
        if (needs) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward_fn = std::move(backward_fn);
        }
    }
    return node;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw ShapeMismatch(std::string(op) + ": shapes " + a->value.shape_str() + " vs " +
                            b->value.shape_str());
    }
}

} // namespace

void Variable::ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
}

void Variable::accumulate(const Tensor& g) {
    ensure_grad();
    const double* src = g.data();
    double* dst = grad.data();
    const long n = grad.numel();
    for (long i = 0; i < n; ++i) dst[i] += src[i];
}

Var make_param(Tensor value) {
    auto node = std::make_shared<Variable>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

Var make_const(Tensor value) {
    auto node = std::make_shared<Variable>();
    node->value = std::move(value);
    return node;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
    if (root->value.numel() != 1) {
        throw PreconditionError("backward expects a scalar root");
    }
    // Reverse topological order via iterative DFS.
    std::vector<Variable*> order;
    std::unordered_set<Variable*> visited;
    std::vector<std::pair<Variable*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Variable* child = node->parents[next_child].get();
            ++next_child;
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Variable* node = *it;
        if (node->backward_fn && node->grad.numel() == node->value.numel()) {
            node->backward_fn(*node);
        }
    }
}

// ——————————————————————— elementwise ———————————————————————

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Variable& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) b->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Variable& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            const long m = self.grad.numel();
            for (long i = 0; i < m; ++i) b->grad[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Variable& self) {
        const long m = self.grad.numel();
        if (a->requires_grad) {
            a->ensure_grad();
            for (long i = 0; i < m; ++i) a->grad[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long i = 0; i < m; ++i) b->grad[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] *= s;
    return make_node(std::move(out), {a}, [a, s](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) a->grad[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] += s;
    return make_node(std::move(out), {a},
                     [a](Variable& self) { a->accumulate(self.grad); });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) {
            if (a->value[i] > 0.0) a->grad[i] += self.grad[i];
        }
    });
}

Var tanh_op(const Var& a) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] = std::tanh(out[i]);
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) {
            const double y = self.value[i];
            a->grad[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) {
            const double y = self.value[i];
            a->grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var abs_op(const Var& a) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] = std::fabs(out[i]);
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) {
            const double x = a->value[i];
            // Subgradient 0 at the kink.
            a->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0);
        }
    });
}

Var one_minus(const Var& a) {
    Tensor out = a->value;
    const long n = out.numel();
    for (long i = 0; i < n; ++i) out[i] = 1.0 - out[i];
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) a->grad[i] -= self.grad[i];
    });
}

// ——————————————————————— shape ———————————————————————

Var reshape(const Var& a, std::vector<int> shape) {
    if (shape_numel(shape) != a->value.numel()) {
        throw ShapeMismatch("reshape: element count mismatch");
    }
    Tensor out = a->value;
    Tensor reshaped(std::move(shape));
    reshaped.raw() = out.raw();
    return make_node(std::move(reshaped), {a}, [a](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) a->grad[i] += self.grad[i];
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw PreconditionError("concat_channels: empty input");
    const int H = xs[0]->value.dim(1);
    const int W = xs[0]->value.dim(2);
    int C = 0;
    for (const Var& x : xs) {
        if (x->value.ndim() != 3 || x->value.dim(1) != H || x->value.dim(2) != W) {
            throw ShapeMismatch("concat_channels: spatial dims differ");
        }
        C += x->value.dim(0);
    }
    Tensor out({C, H, W});
    long offset = 0;
    for (const Var& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + offset);
        offset += x->value.numel();
    }
    return make_node(std::move(out), xs, [xs](Variable& self) {
        long offset = 0;
        for (const Var& x : xs) {
            const long n = x->value.numel();
            if (x->requires_grad) {
                x->ensure_grad();
                for (long i = 0; i < n; ++i) x->grad[i] += self.grad[offset + i];
            }
            offset += n;
        }
    });
}

Var slice_channels(const Var& a, int c0, int c1) {
    const int C = a->value.dim(0);
    const int H = a->value.dim(1);
    const int W = a->value.dim(2);
    if (c0 < 0 || c1 > C || c0 >= c1) throw PreconditionError("slice_channels: bad range");
    Tensor out({c1 - c0, H, W});
    const long plane = static_cast<long>(H) * W;
    std::copy(a->value.data() + c0 * plane, a->value.data() + c1 * plane, out.data());
    return make_node(std::move(out), {a}, [a, c0, plane](Variable& self) {
        a->ensure_grad();
        const long m = self.grad.numel();
        for (long i = 0; i < m; ++i) a->grad[c0 * plane + i] += self.grad[i];
    });
}

// ——————————————————————— reductions ———————————————————————

Var sum_all(const Var& a) {
    Tensor out({1});
    double s = 0.0;
    const long n = a->value.numel();
    for (long i = 0; i < n; ++i) s += a->value[i];
    out[0] = s;
    return make_node(std::move(out), {a}, [a](Variable& self) {
        a->ensure_grad();
        const double g = self.grad[0];
        const long m = a->grad.numel();
        for (long i = 0; i < m; ++i) a->grad[i] += g;
    });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / a->value.numel()); }

// ——————————————————————— linear algebra ———————————————————————

Var matmul(const Var& a, const Var& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0)) {
        throw ShapeMismatch("matmul: " + a->value.shape_str() + " x " + b->value.shape_str());
    }
    const int M = a->value.dim(0);
    const int K = a->value.dim(1);
    const int N = b->value.dim(1);
    Tensor out({M, N});
    {
        ConstMatMap A(a->value.data(), M, K);
        ConstMatMap B(b->value.data(), K, N);
        MatMap O(out.data(), M, N);
        O.noalias() = A * B;
    }
    return make_node(std::move(out), {a, b}, [a, b, M, K, N](Variable& self) {
        ConstMatMap G(self.grad.data(), M, N);
        if (a->requires_grad) {
            a->ensure_grad();
            ConstMatMap B(b->value.data(), K, N);
            MatMap GA(a->grad.data(), M, K);
            GA.noalias() += G * B.transpose();
        }
        if (b->requires_grad) {
            b->ensure_grad();
            ConstMatMap A(a->value.data(), M, K);
            MatMap GB(b->grad.data(), K, N);
            GB.noalias() += A.transpose() * G;
        }
    });
}

Var transpose2d(const Var& a) {
    if (a->value.ndim() != 2) throw ShapeMismatch("transpose2d expects a matrix");
    const int M = a->value.dim(0);
    const int N = a->value.dim(1);
    Tensor out({N, M});
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            out[static_cast<long>(j) * M + i] = a->value[static_cast<long>(i) * N + j];
        }
    }
    return make_node(std::move(out), {a}, [a, M, N](Variable& self) {
        a->ensure_grad();
        for (int i = 0; i < M; ++i) {
            for (int j = 0; j < N; ++j) {
                a->grad[static_cast<long>(i) * N + j] += self.grad[static_cast<long>(j) * M + i];
            }
        }
    });
}

// ——————————————————————— conv / pooling ———————————————————————

namespace {

struct ConvDims {
    int C, H, W, O, k, stride, pad, Ho, Wo;
};

void im2col(const Tensor& x, const ConvDims& d, std::vector<double>& col) {
    // col layout: [C*k*k, Ho*Wo]
    const long cols = static_cast<long>(d.Ho) * d.Wo;
    col.assign(static_cast<size_t>(d.C) * d.k * d.k * cols, 0.0);
    for (int c = 0; c < d.C; ++c) {
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                const long row = (static_cast<long>(c) * d.k + ky) * d.k + kx;
                double* dst = col.data() + row * cols;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.H) continue;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (ix < 0 || ix >= d.W) continue;
                        dst[static_cast<long>(oy) * d.Wo + ox] = x.at(c, iy, ix);
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const std::vector<double>& col, const ConvDims& d, Tensor& gx) {
    const long cols = static_cast<long>(d.Ho) * d.Wo;
    for (int c = 0; c < d.C; ++c) {
        for (int ky = 0; ky < d.k; ++ky) {
            for (int kx = 0; kx < d.k; ++kx) {
                const long row = (static_cast<long>(c) * d.k + ky) * d.k + kx;
                const double* src = col.data() + row * cols;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.H) continue;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (ix < 0 || ix >= d.W) continue;
                        gx.at(c, iy, ix) += src[static_cast<long>(oy) * d.Wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.ndim() != 3 || w->value.ndim() != 4) {
        throw ShapeMismatch("conv2d expects x [C,H,W], w [O,C,kh,kw]");
    }
    if (w->value.dim(2) != w->value.dim(3)) {
        throw ShapeMismatch("conv2d: only square kernels");
    }
    ConvDims d;
    d.C = x->value.dim(0);
    d.H = x->value.dim(1);
    d.W = x->value.dim(2);
    d.O = w->value.dim(0);
    d.k = w->value.dim(2);
    d.stride = stride;
    d.pad = pad;
    if (w->value.dim(1) != d.C) {
        throw ShapeMismatch("conv2d: input channels " + std::to_string(d.C) +
                            " vs kernel " + std::to_string(w->value.dim(1)));
    }
    if (b->value.numel() != d.O) throw ShapeMismatch("conv2d: bias size");
    d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
    if (d.Ho <= 0 || d.Wo <= 0) throw ShapeMismatch("conv2d: empty output");

    const long cols = static_cast<long>(d.Ho) * d.Wo;
    const long krows = static_cast<long>(d.C) * d.k * d.k;

    std::vector<double> col;
    im2col(x->value, d, col);

    Tensor out({d.O, d.Ho, d.Wo});
    {
        ConstMatMap W2(w->value.data(), d.O, krows);
        ConstMatMap Cm(col.data(), krows, cols);
        MatMap O(out.data(), d.O, cols);
        O.noalias() = W2 * Cm;
    }
    for (int o = 0; o < d.O; ++o) {
        const double bias = b->value[o];
        double* plane = out.data() + static_cast<long>(o) * cols;
        for (long i = 0; i < cols; ++i) plane[i] += bias;
    }

    // The column matrix is recomputed in backward to keep graphs light.
    return make_node(std::move(out), {x, w, b}, [x, w, b, d, cols, krows](Variable& self) {
        ConstMatMap G(self.grad.data(), d.O, cols);
        if (b->requires_grad) {
            b->ensure_grad();
            for (int o = 0; o < d.O; ++o) {
                b->grad[o] += G.row(o).sum();
            }
        }
        if (w->requires_grad || x->requires_grad) {
            std::vector<double> col;
            im2col(x->value, d, col);
            if (w->requires_grad) {
                w->ensure_grad();
                ConstMatMap Cm(col.data(), krows, cols);
                MatMap GW(w->grad.data(), d.O, krows);
                GW.noalias() += G * Cm.transpose();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                std::vector<double> gcol(static_cast<size_t>(krows) * cols);
                ConstMatMap W2(w->value.data(), d.O, krows);
                MatMap GC(gcol.data(), krows, cols);
                GC.noalias() = W2.transpose() * G;
                col2im_accumulate(gcol, d, x->grad);
            }
        }
    });
}

Var avg_pool(const Var& a, int k) {
    const int C = a->value.dim(0);
    const int H = a->value.dim(1);
    const int W = a->value.dim(2);
    if (H % k != 0 || W % k != 0) {
        throw ShapeMismatch("avg_pool: dims must divide by " + std::to_string(k));
    }
    const int Ho = H / k;
    const int Wo = W / k;
    Tensor out({C, Ho, Wo});
    const double inv = 1.0 / (static_cast<double>(k) * k);
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                double s = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        s += a->value.at(c, oy * k + dy, ox * k + dx);
                    }
                }
                out.at(c, oy, ox) = s * inv;
            }
        }
    }
    return make_node(std::move(out), {a}, [a, k, C, Ho, Wo, inv](Variable& self) {
        a->ensure_grad();
        for (int c = 0; c < C; ++c) {
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    const double g = self.grad.at(c, oy, ox) * inv;
                    for (int dy = 0; dy < k; ++dy) {
                        for (int dx = 0; dx < k; ++dx) {
                            a->grad.at(c, oy * k + dy, ox * k + dx) += g;
                        }
                    }
                }
            }
        }
    });
}

Var add_channel_vec(const Var& x, const Var& vec) {
    const int C = x->value.dim(0);
    if (vec->value.numel() != C) throw ShapeMismatch("add_channel_vec: vector size != C");
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    Tensor out = x->value;
    for (int c = 0; c < C; ++c) {
        const double v = vec->value[c];
        double* p = out.data() + c * plane;
        for (long i = 0; i < plane; ++i) p[i] += v;
    }
    return make_node(std::move(out), {x, vec}, [x, vec, C, plane](Variable& self) {
        if (x->requires_grad) x->accumulate(self.grad);
        if (vec->requires_grad) {
            vec->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const double* g = self.grad.data() + c * plane;
                double s = 0.0;
                for (long i = 0; i < plane; ++i) s += g[i];
                vec->grad[c] += s;
            }
        }
    });
}

Var softmax_groups(const Var& a, int groups) {
    const int C = a->value.dim(0);
    const int H = a->value.dim(1);
    const int W = a->value.dim(2);
    if (C % groups != 0) throw ShapeMismatch("softmax_groups: C must divide by groups");
    const int M = C / groups;
    Tensor out = a->value;
    const long plane = static_cast<long>(H) * W;
    for (int m = 0; m < M; ++m) {
        for (long i = 0; i < plane; ++i) {
            double peak = -std::numeric_limits<double>::infinity();
            for (int g = 0; g < groups; ++g) {
                peak = std::max(peak, a->value[(static_cast<long>(g) * M + m) * plane + i]);
            }
            double denom = 0.0;
            for (int g = 0; g < groups; ++g) {
                const long idx = (static_cast<long>(g) * M + m) * plane + i;
                out[idx] = std::exp(a->value[idx] - peak);
                denom += out[idx];
            }
            for (int g = 0; g < groups; ++g) {
                out[(static_cast<long>(g) * M + m) * plane + i] /= denom;
            }
        }
    }
    return make_node(std::move(out), {a}, [a, groups, M, plane](Variable& self) {
        a->ensure_grad();
        for (int m = 0; m < M; ++m) {
            for (long i = 0; i < plane; ++i) {
                double dot = 0.0;
                for (int g = 0; g < groups; ++g) {
                    const long idx = (static_cast<long>(g) * M + m) * plane + i;
                    dot += self.grad[idx] * self.value[idx];
                }
                for (int g = 0; g < groups; ++g) {
                    const long idx = (static_cast<long>(g) * M + m) * plane + i;
                    a->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

// ——————————————————————— correlation lookup ———————————————————————

namespace {

struct LookupDims {
    int levels, radius, h, w, window;
};

} // namespace

Var corr_lookup(const std::vector<Var>& pyramid, const Var& flow, int radius) {
    if (pyramid.empty()) throw PreconditionError("corr_lookup: empty pyramid");
    if (flow->value.ndim() != 3 || flow->value.dim(0) != 2) {
        throw ShapeMismatch("corr_lookup: flow must be [2,h,w]");
    }
    LookupDims d;
    d.levels = static_cast<int>(pyramid.size());
    d.radius = radius;
    d.h = flow->value.dim(1);
    d.w = flow->value.dim(2);
    d.window = 2 * radius + 1;
    const long hw = static_cast<long>(d.h) * d.w;
    for (const Var& level : pyramid) {
        if (level->value.ndim() != 3 || level->value.dim(0) != hw) {
            throw ShapeMismatch("corr_lookup: level shape mismatch");
        }
    }

    const int out_ch = d.levels * d.window * d.window;
    Tensor out({out_ch, d.h, d.w});

    // Forward sampling; backward re-derives the same weights.
    auto sample_level = [&](const Tensor& level, long src, double tx, double ty, int hl,
                            int wl) -> double {
        const int x0 = static_cast<int>(std::floor(tx));
        const int y0 = static_cast<int>(std::floor(ty));
        const double fx = tx - x0;
        const double fy = ty - y0;
        double acc = 0.0;
        for (int dy = 0; dy <= 1; ++dy) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= hl) continue;
            const double wy = dy == 0 ? 1.0 - fy : fy;
            for (int dx = 0; dx <= 1; ++dx) {
                const int xx = x0 + dx;
                if (xx < 0 || xx >= wl) continue;
                const double wx = dx == 0 ? 1.0 - fx : fx;
                acc += wy * wx * level[(src * hl + yy) * wl + xx];
            }
        }
        return acc;
    };

    for (int y = 0; y < d.h; ++y) {
        for (int x = 0; x < d.w; ++x) {
            const double target_x = x + flow->value.at(0, y, x);
            const double target_y = y + flow->value.at(1, y, x);
            const long src = static_cast<long>(y) * d.w + x;
            int ch = 0;
            for (int l = 0; l < d.levels; ++l) {
                const Tensor& level = pyramid[l]->value;
                const int hl = level.dim(1);
                const int wl = level.dim(2);
                const double s = 1.0 / static_cast<double>(1 << l);
                const double cx = (target_x + 0.5) * s - 0.5;
                const double cy = (target_y + 0.5) * s - 0.5;
                for (int wy = -d.radius; wy <= d.radius; ++wy) {
                    for (int wx = -d.radius; wx <= d.radius; ++wx, ++ch) {
                        out.at(ch, y, x) = sample_level(level, src, cx + wx, cy + wy, hl, wl);
                    }
                }
            }
        }
    }

    std::vector<Var> parents = pyramid;
    parents.push_back(flow);
    return make_node(std::move(out), std::move(parents), [pyramid, flow, d](Variable& self) {
        const bool flow_grad = flow->requires_grad;
        if (flow_grad) flow->ensure_grad();
        for (const Var& level : pyramid) {
            if (level->requires_grad) level->ensure_grad();
        }
        for (int y = 0; y < d.h; ++y) {
            for (int x = 0; x < d.w; ++x) {
                const double target_x = x + flow->value.at(0, y, x);
                const double target_y = y + flow->value.at(1, y, x);
                const long src = static_cast<long>(y) * d.w + x;
                double gx_total = 0.0;
                double gy_total = 0.0;
                int ch = 0;
                for (int l = 0; l < d.levels; ++l) {
                    Variable& level = *pyramid[static_cast<size_t>(l)];
                    const int hl = level.value.dim(1);
                    const int wl = level.value.dim(2);
                    const double s = 1.0 / static_cast<double>(1 << l);
                    const double cx = (target_x + 0.5) * s - 0.5;
                    const double cy = (target_y + 0.5) * s - 0.5;
                    for (int wy = -d.radius; wy <= d.radius; ++wy) {
                        for (int wx = -d.radius; wx <= d.radius; ++wx, ++ch) {
                            const double g = self.grad.at(ch, y, x);
                            if (g == 0.0) continue;
                            const double tx = cx + wx;
                            const double ty = cy + wy;
                            const int x0 = static_cast<int>(std::floor(tx));
                            const int y0 = static_cast<int>(std::floor(ty));
                            const double fx = tx - x0;
                            const double fy = ty - y0;
                            double v[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
                            for (int dy = 0; dy <= 1; ++dy) {
                                const int yy = y0 + dy;
                                if (yy < 0 || yy >= hl) continue;
                                for (int dx = 0; dx <= 1; ++dx) {
                                    const int xx = x0 + dx;
                                    if (xx < 0 || xx >= wl) continue;
                                    const long idx = (src * hl + yy) * wl + xx;
                                    v[dy][dx] = level.value[idx];
                                    if (level.requires_grad) {
                                        const double wgt = (dy == 0 ? 1.0 - fy : fy) *
                                                           (dx == 0 ? 1.0 - fx : fx);
                                        level.grad[idx] += g * wgt;
                                    }
                                }
                            }
                            if (flow_grad) {
                                const double dfx =
                                    (1.0 - fy) * (v[0][1] - v[0][0]) + fy * (v[1][1] - v[1][0]);
                                const double dfy =
                                    (1.0 - fx) * (v[1][0] - v[0][0]) + fx * (v[1][1] - v[0][1]);
                                gx_total += g * dfx * s;
                                gy_total += g * dfy * s;
                            }
                        }
                    }
                }
                if (flow_grad) {
                    flow->grad.at(0, y, x) += gx_total;
                    flow->grad.at(1, y, x) += gy_total;
                }
            }
        }
    });
}

// ——————————————————————— convex upsampling ———————————————————————

Var convex_upsample(const Var& flow, const Var& weights, int factor) {
    const int h = flow->value.dim(1);
    const int w = flow->value.dim(2);
    const int f2 = factor * factor;
    if (flow->value.dim(0) != 2) throw ShapeMismatch("convex_upsample: flow must be [2,h,w]");
    if (weights->value.dim(0) != 9 * f2 || weights->value.dim(1) != h ||
        weights->value.dim(2) != w) {
        throw ShapeMismatch("convex_upsample: weights must be [9*factor^2,h,w]");
    }

    const int H = h * factor;
    const int W = w * factor;
    Tensor out({2, H, W});
    static const int offs[9][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 0},
                                   {0, 1},   {1, -1}, {1, 0},  {1, 1}};

    for (int Y = 0; Y < H; ++Y) {
        const int y = Y / factor;
        const int sy = Y % factor;
        for (int X = 0; X < W; ++X) {
            const int x = X / factor;
            const int sx = X % factor;
            const int sub = sy * factor + sx;
            double acc_u = 0.0, acc_v = 0.0;
            for (int k = 0; k < 9; ++k) {
                const int yy = y + offs[k][0];
                const int xx = x + offs[k][1];
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue; // zero padded
                const double wgt = weights->value.at(k * f2 + sub, y, x);
                acc_u += wgt * flow->value.at(0, yy, xx);
                acc_v += wgt * flow->value.at(1, yy, xx);
            }
            out.at(0, Y, X) = acc_u;
            out.at(1, Y, X) = acc_v;
        }
    }

    return make_node(std::move(out), {flow, weights},
                     [flow, weights, factor, h, w, f2, H, W](Variable& self) {
        static const int offs[9][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 0},
                                       {0, 1},   {1, -1}, {1, 0},  {1, 1}};
        if (flow->requires_grad) flow->ensure_grad();
        if (weights->requires_grad) weights->ensure_grad();
        for (int Y = 0; Y < H; ++Y) {
            const int y = Y / factor;
            const int sy = Y % factor;
            for (int X = 0; X < W; ++X) {
                const int x = X / factor;
                const int sx = X % factor;
                const int sub = sy * factor + sx;
                const double gu = self.grad.at(0, Y, X);
                const double gv = self.grad.at(1, Y, X);
                for (int k = 0; k < 9; ++k) {
                    const int yy = y + offs[k][0];
                    const int xx = x + offs[k][1];
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double wgt = weights->value.at(k * f2 + sub, y, x);
                    if (flow->requires_grad) {
                        flow->grad.at(0, yy, xx) += gu * wgt;
                        flow->grad.at(1, yy, xx) += gv * wgt;
                    }
                    if (weights->requires_grad) {
                        weights->grad.at(k * f2 + sub, y, x) +=
                            gu * flow->value.at(0, yy, xx) + gv * flow->value.at(1, yy, xx);
                    }
                }
            }
        }
    });
}

} // namespace pivflow::net
