#include "evfuse/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "evfuse/errors.hpp"
#include "evfuse/kernels.hpp"

namespace evfuse {

namespace linalg {

void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p) {
    const auto& kt = kernels::active();
    std::fill(c, c + n * p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * p;
        for (std::size_t l = 0; l < k; ++l) {
            kt.axpy(a[i * k + l], b + l * p, crow, p);
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p) {
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            c[i * p + j] = kt.dot(a + i * k, b + j * k, k);
        }
    }
}

void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p) {
    const auto& kt = kernels::active();
    std::fill(c, c + k * p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            kt.axpy(a[i * k + l], b + i * p, c + l * p, p);
        }
    }
}

}  // namespace linalg

namespace {

std::atomic<std::uint32_t> g_tape_counter{1};

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) throw ShapeError(std::string(what) + " expects a matrix, got " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + " shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

int Tape::push(std::size_t out_size, bool needs_grad,
               std::function<void(Tape&, const std::vector<double>&)> fn) {
    Node node;
    node.needs_grad = needs_grad;
    node.out_size = out_size;
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::emit(Tensor value, bool needs_grad,
                  std::function<void(Tape&, const std::vector<double>&)> fn) {
    const int id = push(value.size(), needs_grad, std::move(fn));
    value.link(id_, id);
    return value;
}

bool Tape::wants(const Tensor& t) const {
    return t.node() >= 0 && t.tape_id() == id_ && nodes_[static_cast<std::size_t>(t.node())].needs_grad;
}

bool Tape::any_grad(std::initializer_list<const Tensor*> ts) const {
    for (const Tensor* t : ts) {
        if (wants(*t)) return true;
    }
    return false;
}

void Tape::check_tape(const Tensor& t) const {
    if (t.node() >= 0 && t.tape_id() != id_) {
        throw ContractError("tensor belongs to a different tape");
    }
}

void Tape::accum(const Tensor& input, const double* g, std::size_t n) {
    if (input.node() < 0 || input.tape_id() != id_) return;
    const auto idx = static_cast<std::size_t>(input.node());
    if (!nodes_[idx].needs_grad) return;
    auto& buf = grads_[idx];
    if (buf.empty()) buf.assign(nodes_[idx].out_size, 0.0);
    kernels::active().axpy(1.0, g, buf.data(), n);
}

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
    if (!value.defined()) throw ContractError("leaf requires a defined tensor");
    Tensor v = value;
    return emit(std::move(v), requires_grad, nullptr);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().add(a.data(), b.data(), out.mutable_data(), a.size());
    return emit(std::move(out), any_grad({&a, &b}), [a, b](Tape& t, const std::vector<double>& g) {
        t.accum(a, g.data(), g.size());
        t.accum(b, g.data(), g.size());
    });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().sub(a.data(), b.data(), out.mutable_data(), a.size());
    return emit(std::move(out), any_grad({&a, &b}), [a, b](Tape& t, const std::vector<double>& g) {
        t.accum(a, g.data(), g.size());
        if (t.wants(b)) {
            std::vector<double> neg(g.size());
            kernels::active().scale(g.data(), -1.0, neg.data(), g.size());
            t.accum(b, neg.data(), neg.size());
        }
    });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().mul(a.data(), b.data(), out.mutable_data(), a.size());
    return emit(std::move(out), any_grad({&a, &b}), [a, b](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(g.size());
        if (t.wants(a)) {
            kernels::active().mul(g.data(), b.data(), tmp.data(), g.size());
            t.accum(a, tmp.data(), tmp.size());
        }
        if (t.wants(b)) {
            kernels::active().mul(g.data(), a.data(), tmp.data(), g.size());
            t.accum(b, tmp.data(), tmp.size());
        }
    });
}

Tensor Tape::scale(const Tensor& a, double s) {
    check_tape(a);
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().scale(a.data(), s, out.mutable_data(), a.size());
    return emit(std::move(out), wants(a), [a, s](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(g.size());
        kernels::active().scale(g.data(), s, tmp.data(), g.size());
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::relu(const Tensor& a) {
    check_tape(a);
    Tensor out = Tensor::zeros(a.shape());
    double* o = out.mutable_data();
    const double* x = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
    return emit(std::move(out), wants(a), [a](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(g.size());
        const double* x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = x[i] > 0.0 ? g[i] : 0.0;
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::square(const Tensor& a) {
    check_tape(a);
    Tensor out = Tensor::zeros(a.shape());
    kernels::active().mul(a.data(), a.data(), out.mutable_data(), a.size());
    return emit(std::move(out), wants(a), [a](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(g.size());
        kernels::active().mul(g.data(), a.data(), tmp.data(), g.size());
        kernels::active().scale(tmp.data(), 2.0, tmp.data(), tmp.size());
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::pow_scalar(const Tensor& a, double e) {
    check_tape(a);
    const double* x = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(x[i] > 0.0)) {
            throw ContractError("pow_scalar requires strictly positive input, got " + std::to_string(x[i]));
        }
    }
    Tensor out = Tensor::zeros(a.shape());
    double* o = out.mutable_data();
    for (std::size_t i = 0; i < a.size(); ++i) o[i] = std::pow(x[i], e);
    Tensor saved = out;
    return emit(std::move(out), wants(a), [a, saved, e](Tape& t, const std::vector<double>& g) {
        // d/dx x^e = e * x^(e-1) = e * out / x for x > 0
        std::vector<double> tmp(g.size());
        const double* xx = a.data();
        const double* y = saved.data();
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = e * y[i] / xx[i] * g[i];
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    if (a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul inner dimension mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t n = a.extent(0), k = a.extent(1), p = b.extent(1);
    Tensor out = Tensor::zeros({n, p});
    linalg::mm_nn(a.data(), b.data(), out.mutable_data(), n, k, p);
    return emit(std::move(out), any_grad({&a, &b}), [a, b, n, k, p](Tape& t, const std::vector<double>& g) {
        if (t.wants(a)) {
            std::vector<double> da(n * k);
            linalg::mm_nt(g.data(), b.data(), da.data(), n, p, k);
            t.accum(a, da.data(), da.size());
        }
        if (t.wants(b)) {
            std::vector<double> db(k * p);
            linalg::mm_tn(a.data(), g.data(), db.data(), n, k, p);
            t.accum(b, db.data(), db.size());
        }
    });
}

Tensor Tape::transpose(const Tensor& a) {
    check_tape(a);
    require_2d(a, "transpose");
    const std::size_t n = a.extent(0), m = a.extent(1);
    Tensor out = Tensor::zeros({m, n});
    double* o = out.mutable_data();
    const double* x = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) o[j * n + i] = x[i * m + j];
    }
    return emit(std::move(out), wants(a), [a, n, m](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) tmp[i * m + j] = g[j * n + i];
        }
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::add_bias(const Tensor& m, const Tensor& bias) {
    check_tape(m);
    check_tape(bias);
    require_2d(m, "add_bias");
    if (bias.ndim() != 1 || bias.extent(0) != m.extent(1)) {
        throw ShapeError("add_bias expects bias [" + std::to_string(m.extent(1)) + "], got " +
                         bias.shape_str());
    }
    const std::size_t n = m.extent(0), c = m.extent(1);
    Tensor out = Tensor::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        kernels::active().add(m.data() + i * c, bias.data(), out.mutable_data() + i * c, c);
    }
    return emit(std::move(out), any_grad({&m, &bias}), [m, bias, n, c](Tape& t, const std::vector<double>& g) {
        t.accum(m, g.data(), g.size());
        if (t.wants(bias)) {
            std::vector<double> gb(c, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                kernels::active().axpy(1.0, g.data() + i * c, gb.data(), c);
            }
            t.accum(bias, gb.data(), gb.size());
        }
    });
}

Tensor Tape::softmax_rows(const Tensor& a) {
    check_tape(a);
    require_2d(a, "softmax_rows");
    const std::size_t n = a.extent(0), m = a.extent(1);
    Tensor out = Tensor::zeros({n, m});
    double* o = out.mutable_data();
    const double* x = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x + i * m;
        double mx = row[0];
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double e = std::exp(row[j] - mx);
            o[i * m + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < m; ++j) o[i * m + j] /= denom;
    }
    Tensor saved = out;
    return emit(std::move(out), wants(a), [a, saved, n, m](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(n * m);
        const double* y = saved.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = kernels::active().dot(g.data() + i * m, y + i * m, m);
            for (std::size_t j = 0; j < m; ++j) {
                tmp[i * m + j] = y[i * m + j] * (g[i * m + j] - d);
            }
        }
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::sum(const Tensor& a) {
    check_tape(a);
    Tensor out = Tensor::scalar(kernels::active().sum(a.data(), a.size()));
    const std::size_t n = a.size();
    return emit(std::move(out), wants(a), [a, n](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(n, g[0]);
        t.accum(a, tmp.data(), n);
    });
}

Tensor Tape::mean(const Tensor& a) {
    check_tape(a);
    const std::size_t n = a.size();
    Tensor out = Tensor::scalar(kernels::active().sum(a.data(), n) / static_cast<double>(n));
    return emit(std::move(out), wants(a), [a, n](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(n, g[0] / static_cast<double>(n));
        t.accum(a, tmp.data(), n);
    });
}

Tensor Tape::row_sum(const Tensor& a) {
    check_tape(a);
    require_2d(a, "row_sum");
    const std::size_t n = a.extent(0), m = a.extent(1);
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) out.set(i, kernels::active().sum(a.data() + i * m, m));
    return emit(std::move(out), wants(a), [a, n, m](Tape& t, const std::vector<double>& g) {
        std::vector<double> tmp(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(tmp.begin() + static_cast<std::ptrdiff_t>(i * m),
                      tmp.begin() + static_cast<std::ptrdiff_t>((i + 1) * m), g[i]);
        }
        t.accum(a, tmp.data(), tmp.size());
    });
}

Tensor Tape::div_rows(const Tensor& m, const Tensor& d) {
    check_tape(m);
    check_tape(d);
    require_2d(m, "div_rows");
    if (d.ndim() != 1 || d.extent(0) != m.extent(0)) {
        throw ShapeError("div_rows expects divisors [" + std::to_string(m.extent(0)) + "], got " +
                         d.shape_str());
    }
    const std::size_t n = m.extent(0), c = m.extent(1);
    for (std::size_t i = 0; i < n; ++i) {
        if (d.at(i) == 0.0) throw ContractError("div_rows divisor is zero at row " + std::to_string(i));
    }
    Tensor out = Tensor::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        kernels::active().scale(m.data() + i * c, 1.0 / d.at(i), out.mutable_data() + i * c, c);
    }
    return emit(std::move(out), any_grad({&m, &d}), [m, d, n, c](Tape& t, const std::vector<double>& g) {
        if (t.wants(m)) {
            std::vector<double> gm(n * c);
            for (std::size_t i = 0; i < n; ++i) {
                kernels::active().scale(g.data() + i * c, 1.0 / d.at(i), gm.data() + i * c, c);
            }
            t.accum(m, gm.data(), gm.size());
        }
        if (t.wants(d)) {
            std::vector<double> gd(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double di = d.at(i);
                gd[i] = -kernels::active().dot(g.data() + i * c, m.data() + i * c, c) / (di * di);
            }
            t.accum(d, gd.data(), gd.size());
        }
    });
}

Tensor Tape::reshape(const Tensor& a, std::vector<std::size_t> shape) {
    check_tape(a);
    Tensor out = a.with_shape(std::move(shape));  // shares the buffer
    return emit(std::move(out), wants(a), [a](Tape& t, const std::vector<double>& g) {
        t.accum(a, g.data(), g.size());
    });
}

Tensor Tape::adaptive_avg_pool(const Tensor& chw, std::size_t k) {
    check_tape(chw);
    if (chw.ndim() != 3) {
        throw ShapeError("adaptive_avg_pool expects [c x h x w], got " + chw.shape_str());
    }
    if (k == 0) throw ConfigError("adaptive_avg_pool output size must be positive");
    const std::size_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    // Window for output index i over extent n: [floor(i*n/k), ceil((i+1)*n/k))
    auto lo = [](std::size_t i, std::size_t n, std::size_t k) { return (i * n) / k; };
    auto hi = [](std::size_t i, std::size_t n, std::size_t k) { return ((i + 1) * n + k - 1) / k; };
    Tensor out = Tensor::zeros({c, k, k});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t r0 = lo(i, h, k), r1 = hi(i, h, k);
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t c0 = lo(j, w, k), c1 = hi(j, w, k);
                double s = 0.0;
                for (std::size_t r = r0; r < r1; ++r) {
                    s += kernels::active().sum(chw.data() + (ch * h + r) * w + c0, c1 - c0);
                }
                out.set(ch, i, j, s / static_cast<double>((r1 - r0) * (c1 - c0)));
            }
        }
    }
    return emit(std::move(out), wants(chw),
                [chw, c, h, w, k, lo, hi](Tape& t, const std::vector<double>& g) {
                    std::vector<double> gx(c * h * w, 0.0);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        for (std::size_t i = 0; i < k; ++i) {
                            const std::size_t r0 = lo(i, h, k), r1 = hi(i, h, k);
                            for (std::size_t j = 0; j < k; ++j) {
                                const std::size_t c0 = lo(j, w, k), c1 = hi(j, w, k);
                                const double share =
                                    g[(ch * k + i) * k + j] / static_cast<double>((r1 - r0) * (c1 - c0));
                                for (std::size_t r = r0; r < r1; ++r) {
                                    for (std::size_t cc = c0; cc < c1; ++cc) {
                                        gx[(ch * h + r) * w + cc] += share;
                                    }
                                }
                            }
                        }
                    }
                    t.accum(chw, gx.data(), gx.size());
                });
}

Tensor Tape::concat_rows(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_2d(a, "concat_rows lhs");
    require_2d(b, "concat_rows rhs");
    if (a.extent(1) != b.extent(1)) {
        throw ShapeError("concat_rows channel mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t n1 = a.extent(0), n2 = b.extent(0), c = a.extent(1);
    Tensor out = Tensor::zeros({n1 + n2, c});
    std::copy(a.data(), a.data() + n1 * c, out.mutable_data());
    std::copy(b.data(), b.data() + n2 * c, out.mutable_data() + n1 * c);
    return emit(std::move(out), any_grad({&a, &b}), [a, b, n1, n2, c](Tape& t, const std::vector<double>& g) {
        t.accum(a, g.data(), n1 * c);
        t.accum(b, g.data() + n1 * c, n2 * c);
    });
}

std::pair<Tensor, Tensor> Tape::split_rows(const Tensor& a, std::size_t n1) {
    check_tape(a);
    require_2d(a, "split_rows");
    const std::size_t n = a.extent(0), c = a.extent(1);
    if (n1 == 0 || n1 >= n) {
        throw ShapeError("split_rows at " + std::to_string(n1) + " out of range for " + a.shape_str());
    }
    const std::size_t n2 = n - n1;
    Tensor top = Tensor::zeros({n1, c});
    Tensor bottom = Tensor::zeros({n2, c});
    std::copy(a.data(), a.data() + n1 * c, top.mutable_data());
    std::copy(a.data() + n1 * c, a.data() + n * c, bottom.mutable_data());
    Tensor top_out = emit(std::move(top), wants(a), [a, n1, c](Tape& t, const std::vector<double>& g) {
        std::vector<double> full(a.size(), 0.0);
        std::copy(g.begin(), g.end(), full.begin());
        t.accum(a, full.data(), full.size());
    });
    Tensor bottom_out = emit(std::move(bottom), wants(a), [a, n1, c](Tape& t, const std::vector<double>& g) {
        std::vector<double> full(a.size(), 0.0);
        std::copy(g.begin(), g.end(), full.begin() + static_cast<std::ptrdiff_t>(n1 * c));
        t.accum(a, full.data(), full.size());
    });
    return {top_out, bottom_out};
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t j0, std::size_t j1) {
    check_tape(a);
    require_2d(a, "slice_cols");
    const std::size_t n = a.extent(0), c = a.extent(1);
    if (j0 >= j1 || j1 > c) {
        throw ShapeError("slice_cols [" + std::to_string(j0) + ", " + std::to_string(j1) +
                         ") out of range for " + a.shape_str());
    }
    const std::size_t cw = j1 - j0;
    Tensor out = Tensor::zeros({n, cw});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(a.data() + i * c + j0, a.data() + i * c + j1, out.mutable_data() + i * cw);
    }
    return emit(std::move(out), wants(a), [a, n, c, j0, cw](Tape& t, const std::vector<double>& g) {
        std::vector<double> full(n * c, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(g.begin() + static_cast<std::ptrdiff_t>(i * cw),
                      g.begin() + static_cast<std::ptrdiff_t>((i + 1) * cw),
                      full.begin() + static_cast<std::ptrdiff_t>(i * c + j0));
        }
        t.accum(a, full.data(), full.size());
    });
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    check_tape(a);
    check_tape(b);
    require_2d(a, "concat_cols lhs");
    require_2d(b, "concat_cols rhs");
    if (a.extent(0) != b.extent(0)) {
        throw ShapeError("concat_cols row mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t n = a.extent(0), c1 = a.extent(1), c2 = b.extent(1);
    Tensor out = Tensor::zeros({n, c1 + c2});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(a.data() + i * c1, a.data() + (i + 1) * c1, out.mutable_data() + i * (c1 + c2));
        std::copy(b.data() + i * c2, b.data() + (i + 1) * c2, out.mutable_data() + i * (c1 + c2) + c1);
    }
    return emit(std::move(out), any_grad({&a, &b}), [a, b, n, c1, c2](Tape& t, const std::vector<double>& g) {
        if (t.wants(a)) {
            std::vector<double> ga(n * c1);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(g.begin() + static_cast<std::ptrdiff_t>(i * (c1 + c2)),
                          g.begin() + static_cast<std::ptrdiff_t>(i * (c1 + c2) + c1),
                          ga.begin() + static_cast<std::ptrdiff_t>(i * c1));
            }
            t.accum(a, ga.data(), ga.size());
        }
        if (t.wants(b)) {
            std::vector<double> gb(n * c2);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(g.begin() + static_cast<std::ptrdiff_t>(i * (c1 + c2) + c1),
                          g.begin() + static_cast<std::ptrdiff_t>((i + 1) * (c1 + c2)),
                          gb.begin() + static_cast<std::ptrdiff_t>(i * c2));
            }
            t.accum(b, gb.data(), gb.size());
        }
    });
}

Tensor Tape::gather_rows(const Tensor& a, std::vector<std::size_t> rows) {
    check_tape(a);
    require_2d(a, "gather_rows");
    const std::size_t n = a.extent(0), c = a.extent(1);
    for (std::size_t r : rows) {
        if (r >= n) throw ShapeError("gather_rows index " + std::to_string(r) + " out of range for " + a.shape_str());
    }
    const std::size_t k = rows.size();
    if (k == 0) throw ShapeError("gather_rows requires at least one row");
    Tensor out = Tensor::zeros({k, c});
    for (std::size_t i = 0; i < k; ++i) {
        std::copy(a.data() + rows[i] * c, a.data() + (rows[i] + 1) * c, out.mutable_data() + i * c);
    }
    return emit(std::move(out), wants(a),
                [a, rows = std::move(rows), n, c](Tape& t, const std::vector<double>& g) {
                    std::vector<double> full(n * c, 0.0);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        kernels::active().axpy(1.0, g.data() + i * c, full.data() + rows[i] * c, c);
                    }
                    t.accum(a, full.data(), full.size());
                });
}

Tensor Tape::scatter_rows(const Tensor& base, const Tensor& src, std::vector<std::size_t> rows) {
    check_tape(base);
    check_tape(src);
    require_2d(base, "scatter_rows base");
    require_2d(src, "scatter_rows src");
    const std::size_t n = base.extent(0), c = base.extent(1);
    if (src.extent(1) != c || src.extent(0) != rows.size()) {
        throw ShapeError("scatter_rows src " + src.shape_str() + " does not match " +
                         std::to_string(rows.size()) + " rows of width " + std::to_string(c));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n) throw ShapeError("scatter_rows index out of range");
        if (i > 0 && rows[i] <= rows[i - 1]) {
            throw ContractError("scatter_rows indices must be strictly ascending");
        }
    }
    Tensor out = Tensor::zeros({n, c});
    std::copy(base.data(), base.data() + n * c, out.mutable_data());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(src.data() + i * c, src.data() + (i + 1) * c, out.mutable_data() + rows[i] * c);
    }
    return emit(std::move(out), any_grad({&base, &src}),
                [base, src, rows = std::move(rows), n, c](Tape& t, const std::vector<double>& g) {
                    if (t.wants(base)) {
                        std::vector<double> gb(g);
                        for (std::size_t r : rows) {
                            std::fill(gb.begin() + static_cast<std::ptrdiff_t>(r * c),
                                      gb.begin() + static_cast<std::ptrdiff_t>((r + 1) * c), 0.0);
                        }
                        t.accum(base, gb.data(), gb.size());
                    }
                    if (t.wants(src)) {
                        std::vector<double> gs(rows.size() * c);
                        for (std::size_t i = 0; i < rows.size(); ++i) {
                            std::copy(g.begin() + static_cast<std::ptrdiff_t>(rows[i] * c),
                                      g.begin() + static_cast<std::ptrdiff_t>((rows[i] + 1) * c),
                                      gs.begin() + static_cast<std::ptrdiff_t>(i * c));
                        }
                        t.accum(src, gs.data(), gs.size());
                    }
                });
}

Tensor Tape::gather_flat(const Tensor& a, std::vector<std::size_t> flat_index,
                         std::vector<std::size_t> out_shape) {
    check_tape(a);
    std::size_t out_n = 1;
    for (std::size_t e : out_shape) out_n *= e;
    if (out_n != flat_index.size()) {
        throw ShapeError("gather_flat index count " + std::to_string(flat_index.size()) +
                         " does not match output shape " + shape_to_string(out_shape));
    }
    for (std::size_t idx : flat_index) {
        if (idx >= a.size()) throw ShapeError("gather_flat index out of range");
    }
    Tensor out = Tensor::zeros(std::move(out_shape));
    double* o = out.mutable_data();
    const double* x = a.data();
    for (std::size_t i = 0; i < out_n; ++i) o[i] = x[flat_index[i]];
    const std::size_t in_n = a.size();
    return emit(std::move(out), wants(a),
                [a, flat_index = std::move(flat_index), in_n](Tape& t, const std::vector<double>& g) {
                    std::vector<double> full(in_n, 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) full[flat_index[i]] += g[i];
                    t.accum(a, full.data(), full.size());
                });
}

Tensor Tape::pairwise_distance(const Tensor& e, const Tensor& x, double floor_eps) {
    check_tape(e);
    check_tape(x);
    require_2d(e, "pairwise_distance lhs");
    require_2d(x, "pairwise_distance rhs");
    if (e.extent(1) != x.extent(1)) {
        throw ShapeError("pairwise_distance feature mismatch: " + e.shape_str() + " vs " + x.shape_str());
    }
    if (!(floor_eps > 0.0)) throw ConfigError("pairwise_distance floor must be positive");
    const std::size_t m = e.extent(0), n = x.extent(0), c = e.extent(1);
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t l = 0; l < c; ++l) {
                const double d = e.at(i, l) - x.at(j, l);
                sq += d * d;
            }
            out.set(i, j, std::max(std::sqrt(sq), floor_eps));
        }
    }
    Tensor saved = out;
    return emit(std::move(out), any_grad({&e, &x}),
                [e, x, saved, floor_eps, m, n, c](Tape& t, const std::vector<double>& g) {
                    std::vector<double> ge(m * c, 0.0), gx(n * c, 0.0);
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) {
                            const double d = saved.at(i, j);
                            if (d <= floor_eps) continue;  // clamped: zero gradient
                            const double coeff = g[i * n + j] / d;
                            for (std::size_t l = 0; l < c; ++l) {
                                const double diff = e.at(i, l) - x.at(j, l);
                                ge[i * c + l] += coeff * diff;
                                gx[j * c + l] -= coeff * diff;
                            }
                        }
                    }
                    if (t.wants(e)) t.accum(e, ge.data(), ge.size());
                    if (t.wants(x)) t.accum(x, gx.data(), gx.size());
                });
}

Tensor Tape::bce_with_logits(const Tensor& logits, const Tensor& targets) {
    check_tape(logits);
    require_same_shape(logits, targets, "bce_with_logits");
    const std::size_t n = logits.size();
    const double* z = logits.data();
    const double* y = targets.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // max(z,0) - z*y + log(1 + exp(-|z|)), the overflow-free form
        acc += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    Tensor tgt = targets.detach();  // targets are data, never differentiated
    return emit(std::move(out), wants(logits), [logits, tgt, n](Tape& t, const std::vector<double>& g) {
        std::vector<double> gz(n);
        const double* zz = logits.data();
        const double* yy = tgt.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-zz[i]));
            gz[i] = (sig - yy[i]) / static_cast<double>(n) * g[0];
        }
        t.accum(logits, gz.data(), gz.size());
    });
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& classes) {
    check_tape(logits);
    require_2d(logits, "softmax_cross_entropy");
    const std::size_t n = logits.extent(0), k = logits.extent(1);
    if (classes.size() != n) {
        throw ShapeError("softmax_cross_entropy expects " + std::to_string(n) + " class labels, got " +
                         std::to_string(classes.size()));
    }
    for (std::size_t cls : classes) {
        if (cls >= k) throw ShapeError("class id " + std::to_string(cls) + " out of range");
    }
    // Save the row softmax for the backward pass.
    Tensor probs = Tensor::zeros({n, k});
    const double* z = logits.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z + i * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < k; ++j) probs.set(i, j, std::exp(row[j] - mx) / denom);
        acc += (mx + std::log(denom)) - row[classes[i]];
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    return emit(std::move(out), wants(logits),
                [logits, probs, classes, n, k](Tape& t, const std::vector<double>& g) {
                    std::vector<double> gz(n * k);
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const double onehot = (j == classes[i]) ? 1.0 : 0.0;
                            gz[i * k + j] = (probs.at(i, j) - onehot) / static_cast<double>(n) * g[0];
                        }
                    }
                    t.accum(logits, gz.data(), gz.size());
                });
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + loss.shape_str());
    }
    if (loss.node() < 0 || loss.tape_id() != id_) {
        throw ContractError("backward loss is not recorded on this tape");
    }
    grads_.assign(nodes_.size(), {});
    const auto start = static_cast<std::size_t>(loss.node());
    grads_[start] = {1.0};
    for (std::size_t i = start + 1; i-- > 0;) {
        if (grads_[i].empty()) continue;
        if (nodes_[i].backward) nodes_[i].backward(*this, grads_[i]);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (t.node() < 0 || t.tape_id() != id_) {
        throw ContractError("grad() requires a tensor recorded on this tape");
    }
    const auto idx = static_cast<std::size_t>(t.node());
    Tensor g = Tensor::zeros(t.shape());
    if (idx < grads_.size() && !grads_[idx].empty()) {
        std::copy(grads_[idx].begin(), grads_[idx].end(), g.mutable_data());
    }
    return g;
}

}  // namespace evfuse
