#include "shopgraph/tensorcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace shopgraph {

namespace {

std::string shape_of(const Matrix& m) { return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]"; }

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shapes " + shape_of(a) + " and " + shape_of(b) + " differ");
}

void require_index(const char* op, const Index& index, Eigen::Index rows, int segments) {
    if (static_cast<Eigen::Index>(index.size()) != rows)
        throw ShapeError(std::string(op) + ": index has " + std::to_string(index.size()) + " entries for " +
                         std::to_string(rows) + " rows");
    for (int s : index)
        if (s < 0 || s >= segments)
            throw ShapeError(std::string(op) + ": index " + std::to_string(s) + " outside [0," + std::to_string(segments) +
                             ")");
}

void require_blocks(const char* op, const Matrix& a, int blocks) {
    if (blocks <= 0 || a.cols() % blocks != 0)
        throw ShapeError(std::string(op) + ": " + shape_of(a) + " does not split into " + std::to_string(blocks) +
                         " blocks");
}

}  // namespace

Tensor& ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = tensors_.size();
    tensors_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
    return tensors_.back();
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

void ParamSet::zero_grad() {
    for (auto& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

bool ParamSet::same_values(const ParamSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        const auto& a = tensors_[i];
        const auto& b = other.tensors_[i];
        if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols() ||
            a.value != b.value)
            return false;
    }
    return true;
}

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ShapeError("scalar(): value has shape " + shape_of(v));
    return v(0, 0);
}

Var Tape::constant(Matrix value) {
    nodes_.push_back({std::move(value), Matrix(), nullptr, nullptr, false});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Tensor& param) {
    nodes_.push_back({param.value, Matrix(), nullptr, grad_enabled_ ? &param : nullptr, grad_enabled_});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
        if (v.tape != this) throw std::invalid_argument("operands belong to different tapes");
        needs = needs || nodes_[static_cast<std::size_t>(v.id)].needs_grad;
    }
    needs = needs && grad_enabled_;
    nodes_.push_back({std::move(value), Matrix(), needs ? std::move(backward) : nullptr, nullptr, needs});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: root belongs to another tape");
    if (done_) throw std::logic_error("backward called twice on one tape");
    if (root.value().size() != 1) throw ShapeError("backward: root has shape " + shape_of(root.value()));
    done_ = true;
    if (!grad_enabled_) return;
    grad_ref(root.id)(0, 0) = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.param) {
            if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols())
                n.param->grad = Matrix::Zero(n.grad.rows(), n.grad.cols());
            n.param->grad += n.grad;
        }
        if (n.backward) n.backward(*this, id);
    }
}

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: shapes " + shape_of(a.value()) + " and " + shape_of(b.value()) + " do not chain");
    Matrix out = a.value() * b.value();
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.needs_grad(ia)) t.accumulate_product(ia, g, t.value(ib).transpose());
        if (t.needs_grad(ib)) t.accumulate_product(ib, t.value(ia).transpose(), g);
    });
}

Var add(Var a, Var b) {
    require_same_shape("add", a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
        if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self));
        if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self));
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
        if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self));
        if (t.needs_grad(ib)) t.accumulate(ib, -t.grad(self));
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
        if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
        if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
    });
}

Var scale(Var a, double factor) {
    const int ia = a.id;
    return a.tape->record(a.value() * factor, {a},
                          [ia, factor](Tape& t, int self) { t.accumulate(ia, t.grad(self) * factor); });
}

Var add_scalar(Var a, double value) {
    const int ia = a.id;
    return a.tape->record(a.value().array() + value, {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var add_row(Var a, Var b) {
    if (b.rows() != 1 || b.cols() != a.cols())
        throw ShapeError("add_row: " + shape_of(b.value()) + " is not a row matching " + shape_of(a.value()));
    Matrix out = a.value();
    out.rowwise() += b.value().row(0);
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
        if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self));
        if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self).colwise().sum());
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Tape* tape = parts.front().tape;
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows)
            throw ShapeError("concat_cols: shapes " + shape_of(parts.front().value()) + " and " + shape_of(p.value()) +
                             " have different row counts");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index c = 0;
    for (const Var& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        ids.push_back(p.id);
        offsets.push_back(c);
        c += p.cols();
    }
    return tape->record(std::move(out), parts, [ids, offsets](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.needs_grad(ids[k])) continue;
            Matrix& dst = t.grad_ref(ids[k]);
            dst += g.middleCols(offsets[k], dst.cols());
        }
    });
}

Var leaky_relu(Var a, double slope) {
    const int ia = a.id;
    Matrix out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
    return a.tape->record(std::move(out), {a}, [ia, slope](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        t.accumulate(ia, t.grad(self).cwiseProduct(x.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; })));
    });
}

Var exp(Var a) {
    const int ia = a.id;
    Matrix out = a.value().array().exp().matrix();
    return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
    });
}

Var log(Var a) {
    const int ia = a.id;
    Matrix out = a.value().array().log().matrix();
    return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
    });
}

Var clamp_min(Var a, double floor) {
    const int ia = a.id;
    Matrix out = a.value().cwiseMax(floor);
    return a.tape->record(std::move(out), {a}, [ia, floor](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        t.accumulate(ia, t.grad(self).cwiseProduct(x.unaryExpr([floor](double v) { return v > floor ? 1.0 : 0.0; })));
    });
}

Var minimum(Var a, Var b) {
    require_same_shape("minimum", a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return a.tape->record(a.value().cwiseMin(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(ib);
        const Matrix pick_a = (x.array() <= y.array()).cast<double>().matrix();
        if (t.needs_grad(ia)) t.accumulate(ia, t.grad(self).cwiseProduct(pick_a));
        if (t.needs_grad(ib)) t.accumulate(ib, t.grad(self).cwiseProduct((1.0 - pick_a.array()).matrix()));
    });
}

Var sum(Var a) {
    const int ia = a.id;
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) {
        t.grad_ref(ia).array() += t.grad(self)(0, 0);
    });
}

Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeError("mean: empty input");
    const int ia = a.id;
    const double n = static_cast<double>(a.value().size());
    Matrix out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return a.tape->record(std::move(out), {a}, [ia, n](Tape& t, int self) {
        t.grad_ref(ia).array() += t.grad(self)(0, 0) / n;
    });
}

Var gather_rows(Var a, const Index& index) {
    for (int i : index)
        if (i < 0 || i >= a.rows())
            throw ShapeError("gather_rows: row " + std::to_string(i) + " outside " + shape_of(a.value()));
    Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
    const Matrix& x = a.value();
    for (std::size_t r = 0; r < index.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(index[r]);
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia, index](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& dst = t.grad_ref(ia);
        for (std::size_t r = 0; r < index.size(); ++r) dst.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
    });
}

Var scatter_sum(Var a, const Index& index, int segments) {
    require_index("scatter_sum", index, a.rows(), segments);
    Matrix out = Matrix::Zero(segments, a.cols());
    const Matrix& x = a.value();
    for (std::size_t r = 0; r < index.size(); ++r) out.row(index[r]) += x.row(static_cast<Eigen::Index>(r));
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia, index](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& dst = t.grad_ref(ia);
        for (std::size_t r = 0; r < index.size(); ++r) dst.row(static_cast<Eigen::Index>(r)) += g.row(index[r]);
    });
}

Var segment_mean(Var a, const Index& index, int segments) {
    require_index("segment_mean", index, a.rows(), segments);
    std::vector<double> count(static_cast<std::size_t>(segments), 0.0);
    for (int s : index) count[static_cast<std::size_t>(s)] += 1.0;
    Matrix out = Matrix::Zero(segments, a.cols());
    const Matrix& x = a.value();
    for (std::size_t r = 0; r < index.size(); ++r)
        out.row(index[r]) += x.row(static_cast<Eigen::Index>(r)) / count[static_cast<std::size_t>(index[r])];
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia, index, count](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& dst = t.grad_ref(ia);
        for (std::size_t r = 0; r < index.size(); ++r)
            dst.row(static_cast<Eigen::Index>(r)) += g.row(index[r]) / count[static_cast<std::size_t>(index[r])];
    });
}

namespace {

// Per (segment, column) log-sum-exp with max subtraction.
Matrix segment_logsumexp(const Matrix& x, const Index& index, int segments) {
    const double lowest = -std::numeric_limits<double>::infinity();
    Matrix mx = Matrix::Constant(segments, x.cols(), lowest);
    for (std::size_t r = 0; r < index.size(); ++r)
        mx.row(index[r]) = mx.row(index[r]).cwiseMax(x.row(static_cast<Eigen::Index>(r)));
    Matrix acc = Matrix::Zero(segments, x.cols());
    for (std::size_t r = 0; r < index.size(); ++r)
        acc.row(index[r]).array() += (x.row(static_cast<Eigen::Index>(r)) - mx.row(index[r])).array().exp();
    Matrix out = mx;
    for (Eigen::Index s = 0; s < segments; ++s)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            out(s, c) = acc(s, c) > 0 ? mx(s, c) + std::log(acc(s, c)) : 0.0;
    return out;
}

}  // namespace

Var segment_softmax(Var a, const Index& index, int segments) {
    require_index("segment_softmax", index, a.rows(), segments);
    const Matrix& x = a.value();
    const Matrix lse = segment_logsumexp(x, index, segments);
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        out.row(row) = (x.row(row) - lse.row(index[r])).array().exp();
    }
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia, index, segments](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix dot = Matrix::Zero(segments, y.cols());
        for (std::size_t r = 0; r < index.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            dot.row(index[r]) += y.row(row).cwiseProduct(g.row(row));
        }
        Matrix& dst = t.grad_ref(ia);
        for (std::size_t r = 0; r < index.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            dst.row(row) += y.row(row).cwiseProduct(g.row(row) - dot.row(index[r]));
        }
    });
}

Var segment_log_softmax(Var a, const Index& index, int segments) {
    require_index("segment_log_softmax", index, a.rows(), segments);
    const Matrix& x = a.value();
    const Matrix lse = segment_logsumexp(x, index, segments);
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        out.row(row) = x.row(row) - lse.row(index[r]);
    }
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia, index, segments](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix total = Matrix::Zero(segments, y.cols());
        for (std::size_t r = 0; r < index.size(); ++r) total.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
        Matrix& dst = t.grad_ref(ia);
        for (std::size_t r = 0; r < index.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            dst.row(row) += g.row(row) - y.row(row).array().exp().matrix().cwiseProduct(total.row(index[r]));
        }
    });
}

Var softmax(Var a) { return segment_softmax(a, Index(static_cast<std::size_t>(a.rows()), 0), 1); }

Var log_softmax(Var a) { return segment_log_softmax(a, Index(static_cast<std::size_t>(a.rows()), 0), 1); }

Var block_dot(Var a, Var b, int blocks) {
    require_same_shape("block_dot", a.value(), b.value());
    require_blocks("block_dot", a.value(), blocks);
    const Eigen::Index w = a.cols() / blocks;
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    Matrix out(x.rows(), blocks);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (int k = 0; k < blocks; ++k) out(r, k) = x.row(r).segment(k * w, w).dot(y.row(r).segment(k * w, w));
    const int ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {a, b}, [ia, ib, blocks, w](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const bool ga = t.needs_grad(ia), gb = t.needs_grad(ib);
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(ib);
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            for (int k = 0; k < blocks; ++k) {
                if (ga) t.grad_ref(ia).row(r).segment(k * w, w) += g(r, k) * y.row(r).segment(k * w, w);
                if (gb) t.grad_ref(ib).row(r).segment(k * w, w) += g(r, k) * x.row(r).segment(k * w, w);
            }
    });
}

Var block_scale(Var a, Var w, int blocks) {
    require_blocks("block_scale", a.value(), blocks);
    if (w.rows() != a.rows() || w.cols() != blocks)
        throw ShapeError("block_scale: weights " + shape_of(w.value()) + " do not match " + shape_of(a.value()) +
                         " with " + std::to_string(blocks) + " blocks");
    const Eigen::Index width = a.cols() / blocks;
    Matrix out = a.value();
    const Matrix& s = w.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (int k = 0; k < blocks; ++k) out.row(r).segment(k * width, width) *= s(r, k);
    const int ia = a.id, iw = w.id;
    return a.tape->record(std::move(out), {a, w}, [ia, iw, blocks, width](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ia);
        const Matrix& s = t.value(iw);
        const bool ga = t.needs_grad(ia), gw = t.needs_grad(iw);
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            for (int k = 0; k < blocks; ++k) {
                const auto gseg = g.row(r).segment(k * width, width);
                if (ga) t.grad_ref(ia).row(r).segment(k * width, width) += s(r, k) * gseg;
                if (gw) t.grad_ref(iw)(r, k) += gseg.dot(x.row(r).segment(k * width, width));
            }
    });
}

Var masked_fill(Var a, const Matrix& mask, double fill) {
    require_same_shape("masked_fill", a.value(), mask);
    Matrix out = a.value();
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (mask.data()[i] != 0.0) out.data()[i] += fill;
    const int ia = a.id;
    return a.tape->record(std::move(out), {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

void reuse_freed_memory() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
#endif
}

FdReport finite_difference_check(const std::function<Var(Tape&)>& loss, const std::vector<Tensor*>& params, double h,
                                 int max_coordinates, std::uint64_t seed, double abs_floor) {
    for (Tensor* p : params) p->grad.setZero(p->value.rows(), p->value.cols());
    {
        Tape tape;
        Var out = loss(tape);
        if (!std::isfinite(out.scalar())) throw std::runtime_error("finite_difference_check: non-finite loss");
        tape.backward(out);
    }
    auto evaluate = [&] {
        Tape tape(false);
        const double v = loss(tape).scalar();
        if (!std::isfinite(v)) throw std::runtime_error("finite_difference_check: non-finite loss");
        return v;
    };

    std::vector<std::pair<std::size_t, Eigen::Index>> coords;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (Eigen::Index i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
    if (max_coordinates > 0 && coords.size() > static_cast<std::size_t>(max_coordinates)) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(static_cast<std::size_t>(max_coordinates));
    }

    FdReport report;
    for (const auto& [p, i] : coords) {
        double& x = params[p]->value.data()[i];
        const double saved = x;
        x = saved + h;
        const double up = evaluate();
        x = saved - h;
        const double down = evaluate();
        x = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = params[p]->grad.data()[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
        report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic - numeric) / denom);
        ++report.coordinates;
    }
    return report;
}

Adam::Adam(const ParamSet& params, AdamConfig config) : config_(config) {
    for (const auto& t : params.tensors()) {
        m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
        v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    }
}

void Adam::step(ParamSet& params) {
    auto& tensors = params.tensors();
    if (tensors.size() != m_.size()) throw ShapeError("Adam: parameter count changed");
    for (const auto& t : tensors) {
        if (t.grad.rows() != t.value.rows() || t.grad.cols() != t.value.cols())
            throw ShapeError("Adam: gradient of '" + t.name + "' has shape " + shape_of(t.grad));
        if (!t.grad.allFinite()) throw std::runtime_error("Adam: non-finite gradient in '" + t.name + "'");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        auto& t = tensors[k];
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * t.grad;
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * t.grad.cwiseAbs2();
        t.value.array() -=
            config_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.eps);
    }
}

void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const ParamSet& params) {
    for (const auto& t : params.tensors()) ckpt.tensors[prefix + t.name] = t.value;
}

void load_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, ParamSet& params) {
    for (auto& t : params.tensors()) {
        auto it = ckpt.tensors.find(prefix + t.name);
        if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint lacks tensor '" + prefix + t.name + "'");
        if (it->second.rows() != t.value.rows() || it->second.cols() != t.value.cols())
            throw ShapeError("checkpoint tensor '" + prefix + t.name + "' has shape " + shape_of(it->second) +
                             ", expected " + shape_of(t.value));
        t.value = it->second;
    }
}

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '\n', '\0'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw std::runtime_error("checkpoint truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ckpt.manifest.size());
    out += ckpt.manifest;
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, m] : ckpt.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::int64_t>(out, m.rows());
        put<std::int64_t>(out, m.cols());
        out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    }
    return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("not a checkpoint file");
    std::size_t pos = sizeof kMagic;
    const auto version = take<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported");
    Checkpoint ckpt;
    const auto manifest_size = take<std::uint64_t>(bytes, pos);
    if (pos + manifest_size > bytes.size()) throw std::runtime_error("checkpoint truncated");
    ckpt.manifest = bytes.substr(pos, manifest_size);
    pos += manifest_size;
    const auto count = take<std::uint64_t>(bytes, pos);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_size = take<std::uint32_t>(bytes, pos);
        if (pos + name_size > bytes.size()) throw std::runtime_error("checkpoint truncated");
        std::string name = bytes.substr(pos, name_size);
        pos += name_size;
        const auto rows = take<std::int64_t>(bytes, pos);
        const auto cols = take<std::int64_t>(bytes, pos);
        if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint tensor '" + name + "' has a negative shape");
        const auto n = static_cast<std::size_t>(rows * cols);
        if (pos + n * sizeof(double) > bytes.size()) throw std::runtime_error("checkpoint truncated");
        Matrix m(rows, cols);
        std::memcpy(m.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        ckpt.tensors.emplace(std::move(name), std::move(m));
    }
    if (pos != bytes.size()) throw std::runtime_error("checkpoint has trailing bytes");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string bytes = checkpoint_to_bytes(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_bytes(buf.str());
}

}  // namespace shopgraph
