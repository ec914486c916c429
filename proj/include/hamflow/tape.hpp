#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hamflow/types.hpp"

namespace hamflow {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    const Mat& value() const;
    const Mat& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Single-input differentiable map recorded as one tape node.
struct CustomOp {
    virtual ~CustomOp() = default;
    virtual Mat forward(const Mat& input) const = 0;
    /// Adjoint of the input given the output adjoint.
    virtual Mat backward(const Mat& input, const Mat& output, const Mat& output_adjoint) const = 0;
};

/// Reverse-mode autodiff over batched matrices (one sample per row).
///
/// Nodes are appended in evaluation order, so the recorded order is a valid
/// topological order and `backward` can sweep it in reverse.
class Tape {
public:
    enum class Op {
        Leaf,
        MatMul,       // a * b
        MatMulT,      // a * b^T
        Add,
        Sub,
        Mul,          // elementwise
        Div,          // elementwise
        AddRow,       // a + broadcast row vector b
        MulCol,       // a .* broadcast column vector b
        Scale,        // scalar * a
        AddScalar,    // a + scalar
        Tanh,
        Sin,
        Cos,
        Square,
        ConcatCols,
        Column,       // column `index` of a
        RowDot,       // per-row inner product, n x 1
        RowSquaredNorm,
        SumAll,       // 1 x 1
        MeanAll,      // 1 x 1
        Custom,
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Mat value);
    Var leaf_vector(const Vec& column) { return leaf(Mat(column)); }
    Var scalar(double value) { return leaf(Mat::Constant(1, 1, value)); }

    Var matmul(Var a, Var b);
    Var matmul_t(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var add_row(Var a, Var row);
    Var mul_col(Var a, Var col);
    Var scale(Var a, double factor);
    Var add_scalar(Var a, double offset);
    Var tanh(Var a);
    Var sin(Var a);
    Var cos(Var a);
    Var square(Var a);
    Var concat_cols(Var a, Var b);
    Var column(Var a, Eigen::Index index);
    Var row_dot(Var a, Var b);
    Var row_squared_norm(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var custom(std::shared_ptr<const CustomOp> op, Var input);

    /// Accumulates adjoints of every node w.r.t. the 1 x 1 node `output`.
    /// Adjoints are reset first, so backward may be called repeatedly.
    void backward(Var output);

    /// Overwrites a leaf value; call `recompute` to propagate it.
    void set_leaf(Var leaf, Mat value);
    /// Re-evaluates every non-leaf node from the current leaf values.
    void recompute();
    /// Replays the forward pass and throws std::logic_error unless every
    /// recorded value is reproduced bit for bit.
    void verify_replay() const;

    const Mat& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id())).value; }
    const Mat& grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::Leaf;
        int a = -1;
        int b = -1;
        double scalar = 0.0;
        Eigen::Index index = 0;
        std::shared_ptr<const CustomOp> custom;
        Mat value;
        Mat adjoint;
    };

    static Node make_node(Op op, int a, int b = -1);
    Var push(Node node);
    const Node& node(Var v) const;
    int id_of(Var v) const;
    Mat evaluate(const Node& n) const;
    void propagate(const Node& n);

    std::vector<Node> nodes_;
    int backward_root_ = -1;
};

inline Var operator+(Var a, Var b) { return a.tape().add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape().sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape().mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape().scale(a, s); }
inline Var operator*(Var a, double s) { return a.tape().scale(a, s); }
inline Var operator-(Var a) { return a.tape().scale(a, -1.0); }

}  // namespace hamflow
