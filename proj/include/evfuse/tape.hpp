#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "evfuse/tensor.hpp"

namespace evfuse {

// Reverse-mode tape over a closed primitive set. Every op records a node
// with its input links and a backward closure holding the saved activations;
// backward() sweeps the nodes once in reverse order, so gradients are
// deterministic and bit-identical across repeated runs on the same tape.
//
// Tensors with node < 0 are constants: ops accept them, no gradient flows.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint32_t id() const { return id_; }
    std::size_t node_count() const { return nodes_.size(); }

    // Registers a leaf value. requires_grad=false leaves participate in the
    // graph but receive no gradient.
    Tensor leaf(const Tensor& value, bool requires_grad = true);

    // --- elementwise ---
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor relu(const Tensor& a);
    Tensor square(const Tensor& a);
    // x^e for constant e; requires strictly positive input.
    Tensor pow_scalar(const Tensor& a, double e);

    // --- linear algebra ---
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    // [n x c] plus a length-c bias row; the only broadcast in the op set.
    Tensor add_bias(const Tensor& m, const Tensor& bias);
    Tensor softmax_rows(const Tensor& a);

    // --- reductions ---
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor row_sum(const Tensor& a);                    // [n x m] -> [n]
    Tensor div_rows(const Tensor& m, const Tensor& d);  // [n x c] / [n]

    // --- structure ---
    Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
    Tensor adaptive_avg_pool(const Tensor& chw, std::size_t k);
    Tensor concat_rows(const Tensor& a, const Tensor& b);
    std::pair<Tensor, Tensor> split_rows(const Tensor& a, std::size_t n1);
    Tensor slice_cols(const Tensor& a, std::size_t j0, std::size_t j1);
    Tensor concat_cols(const Tensor& a, const Tensor& b);
    Tensor gather_rows(const Tensor& a, std::vector<std::size_t> rows);
    // out = base with row rows[i] replaced by src row i; rows strictly
    // ascending and unique.
    Tensor scatter_rows(const Tensor& base, const Tensor& src, std::vector<std::size_t> rows);
    // out[i] = a[flat_index[i]]; backward scatter-adds. Covers patch
    // extraction, nearest-neighbour upsampling and column shuffles.
    Tensor gather_flat(const Tensor& a, std::vector<std::size_t> flat_index,
                       std::vector<std::size_t> out_shape);

    // --- compound numeric primitives ---
    // D[i][j] = max(||e_i - x_j||_2, floor_eps); gradient is zero where the
    // floor clamps.
    Tensor pairwise_distance(const Tensor& e, const Tensor& x, double floor_eps);
    // Mean of the stable elementwise binary cross entropy on logits;
    // targets are data, never differentiated.
    Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
    // Mean of per-row cross entropy at the target class.
    Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& classes);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
    // ContractError unless loss is a scalar recorded on this tape.
    void backward(const Tensor& loss);

    // Gradient of the last backward() w.r.t. a tensor recorded on this tape;
    // zeros when no gradient reached it.
    Tensor grad(const Tensor& t) const;

private:
    struct Node {
        bool needs_grad = false;
        std::size_t out_size = 0;
        std::function<void(Tape&, const std::vector<double>&)> backward;
    };

    int push(std::size_t out_size, bool needs_grad,
             std::function<void(Tape&, const std::vector<double>&)> fn);
    Tensor emit(Tensor value, bool needs_grad,
                std::function<void(Tape&, const std::vector<double>&)> fn);
    bool wants(const Tensor& t) const;
    bool any_grad(std::initializer_list<const Tensor*> ts) const;
    void check_tape(const Tensor& t) const;
    void accum(const Tensor& input, const double* g, std::size_t n);

    std::uint32_t id_;
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

namespace linalg {
// Raw-buffer matmul helpers shared by forward and backward paths.
// C [n x p] = A [n x k] * B [k x p]
void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p);
// C [n x p] = A [n x k] * B^T, B stored [p x k]
void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p);
// C [k x p] = A^T * B, A stored [n x k], B stored [n x p]
void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t p);
}  // namespace linalg

}  // namespace evfuse
