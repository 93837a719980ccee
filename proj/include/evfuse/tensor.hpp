#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace evfuse {

// Dense row-major f64 tensor. Value semantics with a shared data buffer;
// buffers are filled by whoever creates the tensor and treated as immutable
// once handed out. `node` is the optional tape linkage (-1 = constant).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return buf_ ? buf_->size() : 0; }
    std::size_t extent(std::size_t dim) const;
    bool defined() const { return static_cast<bool>(buf_); }

    const double* data() const { return buf_->data(); }
    double* mutable_data() { return buf_->data(); }

    double at(std::size_t i) const { return (*buf_)[i]; }
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;
    void set(std::size_t i, double v) { (*buf_)[i] = v; }
    void set(std::size_t i, std::size_t j, double v);
    void set(std::size_t i, std::size_t j, std::size_t k, double v);

    // Scalar extraction; ContractError unless size() == 1.
    double item() const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    // Deep copy with no tape linkage.
    Tensor detach() const;

    // Shares this tensor's buffer under a new shape (element count must
    // match); no tape linkage. The zero-copy half of reshape.
    Tensor with_shape(std::vector<std::size_t> shape) const;

    int node() const { return node_; }
    std::uint32_t tape_id() const { return tape_id_; }
    void link(std::uint32_t tape, int node) {
        tape_id_ = tape;
        node_ = node;
    }

    // Dump format: magic "HFT1", u32 LE ndim, ndim u32 LE extents, row-major
    // f64 LE payload.
    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Tensor load(std::istream& in);
    static Tensor load_file(const std::string& path);

private:
    std::vector<std::size_t> shape_;
    std::shared_ptr<std::vector<double>> buf_;
    int node_ = -1;
    std::uint32_t tape_id_ = 0;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace evfuse
