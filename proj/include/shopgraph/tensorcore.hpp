#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace shopgraph {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A named learnable matrix with its gradient buffer (same shape).
struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;

    std::vector<Eigen::Index> shape() const { return {value.rows(), value.cols()}; }
};

/// Ordered collection of named tensors. References stay valid while tensors
/// are added; copies are deep.
class ParamSet {
public:
    Tensor& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::deque<Tensor>& tensors() { return tensors_; }
    const std::deque<Tensor>& tensors() const { return tensors_; }
    std::size_t size() const { return tensors_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();
    /// Values only; names and shapes must match.
    bool same_values(const ParamSet& other) const;

private:
    std::deque<Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    double scalar() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Records operations for reverse-mode differentiation. A tape built with
/// gradients disabled treats parameters as constants and records nothing to
/// replay.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Matrix value);
    /// Gradients reaching this node are added to `param.grad` on backward.
    Var param(Tensor& param);

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every
    /// parameter leaf. Callable once per tape.
    void backward(Var root);

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    /// Gradient of the last backward root with respect to node `id`; empty if
    /// no gradient reached it.
    const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Used by the primitives.
    using Backward = std::function<void(Tape&, int)>;
    Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);
    Matrix& grad_ref(int id);
    /// grad(id) += value; the first contribution is assigned without zero-filling.
    template <class Expr>
    void accumulate(int id, const Expr& value) {
        Matrix& g = nodes_[static_cast<std::size_t>(id)].grad;
        if (g.size() == 0)
            g = value;
        else
            g += value;
    }
    /// Same for a matrix product a * b.
    template <class A, class B>
    void accumulate_product(int id, const A& a, const B& b) {
        Matrix& g = nodes_[static_cast<std::size_t>(id)].grad;
        if (g.size() == 0)
            g.noalias() = a * b;
        else
            g.noalias() += a * b;
    }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        Tensor* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    bool grad_enabled_;
    bool done_ = false;
};

/// Index vector used by gather/scatter/segment primitives.
using Index = std::vector<int>;

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
/// a (n x c) plus the row vector b (1 x c) on every row.
Var add_row(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var leaky_relu(Var a, double slope = 0.01);
Var exp(Var a);
Var log(Var a);
/// max(a, floor) elementwise; gradient passes where a > floor.
Var clamp_min(Var a, double floor);
/// Elementwise minimum; gradient goes to the smaller entry (ties to a).
Var minimum(Var a, Var b);
/// Sum of all entries (1 x 1).
Var sum(Var a);
/// Mean of all entries (1 x 1).
Var mean(Var a);
/// out[i] = a[index[i]].
Var gather_rows(Var a, const Index& index);
/// out[index[i]] += a[i], out has `segments` rows.
Var scatter_sum(Var a, const Index& index, int segments);
/// Row means per segment; empty segments give zero rows.
Var segment_mean(Var a, const Index& index, int segments);
/// Column-wise softmax within each segment of rows.
Var segment_softmax(Var a, const Index& index, int segments);
Var segment_log_softmax(Var a, const Index& index, int segments);
/// Softmax over all rows of each column.
Var softmax(Var a);
Var log_softmax(Var a);
/// Row-wise dot products per block of width cols/blocks: (n x b*w, n x b*w) -> n x b.
Var block_dot(Var a, Var b, int blocks);
/// Scales block k of every row of a (n x b*w) by w(row, k) (w is n x b).
Var block_scale(Var a, Var w, int blocks);
/// Adds `fill` where mask is nonzero (mask has a's shape).
Var masked_fill(Var a, const Matrix& mask, double fill);

/// Keeps large freed buffers in the heap so repeated tapes reuse pages instead
/// of faulting in fresh ones. No-op outside glibc.
void reuse_freed_memory();

struct FdReport {
    double max_relative_error = 0.0;
    int coordinates = 0;
};

/// Compares tape gradients of the scalar `loss` with central differences of
/// step h. Parameter sets above `max_coordinates` scalars are checked on a
/// seeded random subsample. The relative error of each coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
/// Throws std::runtime_error on non-finite loss values.
FdReport finite_difference_check(const std::function<Var(Tape&)>& loss, const std::vector<Tensor*>& params,
                                 double h = 1e-5, int max_coordinates = 200, std::uint64_t seed = 0,
                                 double abs_floor = 1e-6);

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over one ParamSet.
class Adam {
public:
    Adam(const ParamSet& params, AdamConfig config = {});

    /// Throws std::runtime_error naming the first parameter with a
    /// non-finite gradient; parameters are left untouched in that case.
    void step(ParamSet& params);

    long long steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long long t_ = 0;
};

/// Binary container: magic, version, JSON manifest text, named tensors.
struct Checkpoint {
    std::string manifest;
    std::map<std::string, Matrix> tensors;

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        if (a.manifest != b.manifest || a.tensors.size() != b.tensors.size()) return false;
        for (auto i = a.tensors.begin(), j = b.tensors.begin(); i != a.tensors.end(); ++i, ++j)
            if (i->first != j->first || i->second.rows() != j->second.rows() || i->second.cols() != j->second.cols() ||
                i->second != j->second)
                return false;
        return true;
    }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const ParamSet& params);
/// Copies every tensor of `params` from `prefix` + name; throws on a missing
/// tensor or a shape mismatch.
void load_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, ParamSet& params);

std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace shopgraph
