#include "evfuse/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extent must be positive, got shape " + shape_to_string(shape));
        n *= e;
    }
    return n;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {
        static_cast<char>(v & 0xFF),
        static_cast<char>((v >> 8) & 0xFF),
        static_cast<char>((v >> 16) & 0xFF),
        static_cast<char>((v >> 24) & 0xFF),
    };
    out.write(bytes, 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw ParseError("truncated tensor header");
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

double read_f64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw ParseError("truncated tensor payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    const std::size_t n = shape_product(shape);
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : *t.buf_) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    const std::size_t n = shape_product(shape);
    if (n != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<std::vector<double>>(std::move(data));
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

std::size_t Tensor::extent(std::size_t dim) const {
    if (dim >= shape_.size()) throw ShapeError("dimension index out of range for shape " + shape_str());
    return shape_[dim];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return (*buf_)[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return (*buf_)[(i * shape_[1] + j) * shape_[2] + k];
}

void Tensor::set(std::size_t i, std::size_t j, double v) {
    (*buf_)[i * shape_[1] + j] = v;
}

void Tensor::set(std::size_t i, std::size_t j, std::size_t k, double v) {
    (*buf_)[(i * shape_[1] + j) * shape_[2] + k] = v;
}

double Tensor::item() const {
    if (!buf_ || buf_->size() != 1) {
        throw ContractError("item() requires a scalar tensor, got shape " + shape_str());
    }
    return (*buf_)[0];
}

bool Tensor::all_finite() const {
    if (!buf_) return true;
    for (double v : *buf_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<double>>(*buf_);
    return t;
}

Tensor Tensor::with_shape(std::vector<std::size_t> shape) const {
    if (shape_product(shape) != size()) {
        throw ShapeError("with_shape from " + shape_str() + " to " + shape_to_string(shape) +
                         " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
}

void Tensor::save(std::ostream& out) const {
    out.write("HFT1", 4);
    write_u32_le(out, static_cast<std::uint32_t>(shape_.size()));
    for (std::size_t e : shape_) write_u32_le(out, static_cast<std::uint32_t>(e));
    for (double v : *buf_) write_f64_le(out, v);
    if (!out) throw IoError("failed writing tensor dump");
}

void Tensor::save_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    save(f);
}

Tensor Tensor::load(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HFT1", 4) != 0) throw ParseError("bad tensor magic (want HFT1)");
    const std::uint32_t ndim = read_u32_le(in);
    if (ndim == 0 || ndim > 8) throw ParseError("unreasonable tensor rank " + std::to_string(ndim));
    std::vector<std::size_t> shape(ndim);
    for (auto& e : shape) e = read_u32_le(in);
    const std::size_t n = shape_product(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = read_f64_le(in);
    return from_data(std::move(shape), std::move(data));
}

Tensor Tensor::load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    return load(f);
}

}  // namespace evfuse
