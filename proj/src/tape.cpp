#include "hamflow/tape.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace hamflow {

const Mat& Var::value() const { return tape_->value(*this); }
const Mat& Var::grad() const { return tape_->grad(*this); }

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string("tape ") + op + ": shape mismatch (" + std::to_string(a.rows()) +
                                    "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

}  // namespace

Tape::Node Tape::make_node(Op op, int a, int b) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return n;
}

int Tape::id_of(Var v) const {
    if (!v.valid() || &v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size())
        throw std::invalid_argument("tape: variable does not belong to this tape");
    return v.id();
}

const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<std::size_t>(id_of(v))]; }

const Mat& Tape::grad(Var v) const {
    const int id = id_of(v);
    if (backward_root_ < 0) throw std::logic_error("tape: backward has not been run");
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (id > backward_root_) throw std::logic_error("tape: node was recorded after the differentiated output");
    return n.adjoint;
}

Var Tape::push(Node n) {
    n.value = evaluate(n);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Mat value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::matmul(Var a, Var b) {
    if (node(a).value.cols() != node(b).value.rows()) throw std::invalid_argument("tape matmul: inner dimensions differ");
    return push(make_node(Op::MatMul, id_of(a), id_of(b)));
}

Var Tape::matmul_t(Var a, Var b) {
    if (node(a).value.cols() != node(b).value.cols())
        throw std::invalid_argument("tape matmul_t: inner dimensions differ");
    return push(make_node(Op::MatMulT, id_of(a), id_of(b)));
}

Var Tape::add(Var a, Var b) {
    require_same_shape(node(a).value, node(b).value, "add");
    return push(make_node(Op::Add, id_of(a), id_of(b)));
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(node(a).value, node(b).value, "sub");
    return push(make_node(Op::Sub, id_of(a), id_of(b)));
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(node(a).value, node(b).value, "mul");
    return push(make_node(Op::Mul, id_of(a), id_of(b)));
}

Var Tape::div(Var a, Var b) {
    require_same_shape(node(a).value, node(b).value, "div");
    return push(make_node(Op::Div, id_of(a), id_of(b)));
}

Var Tape::add_row(Var a, Var row) {
    const Mat& r = node(row).value;
    if (r.rows() != 1 || r.cols() != node(a).value.cols()) throw std::invalid_argument("tape add_row: bad row shape");
    return push(make_node(Op::AddRow, id_of(a), id_of(row)));
}

Var Tape::mul_col(Var a, Var col) {
    const Mat& c = node(col).value;
    if (c.cols() != 1 || c.rows() != node(a).value.rows()) throw std::invalid_argument("tape mul_col: bad column shape");
    return push(make_node(Op::MulCol, id_of(a), id_of(col)));
}

Var Tape::scale(Var a, double factor) {
    Node n = make_node(Op::Scale, id_of(a));
    n.scalar = factor;
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, double offset) {
    Node n = make_node(Op::AddScalar, id_of(a));
    n.scalar = offset;
    return push(std::move(n));
}

Var Tape::tanh(Var a) { return push(make_node(Op::Tanh, id_of(a))); }
Var Tape::sin(Var a) { return push(make_node(Op::Sin, id_of(a))); }
Var Tape::cos(Var a) { return push(make_node(Op::Cos, id_of(a))); }
Var Tape::square(Var a) { return push(make_node(Op::Square, id_of(a))); }

Var Tape::concat_cols(Var a, Var b) {
    if (node(a).value.rows() != node(b).value.rows()) throw std::invalid_argument("tape concat_cols: row counts differ");
    return push(make_node(Op::ConcatCols, id_of(a), id_of(b)));
}

Var Tape::column(Var a, Eigen::Index index) {
    if (index < 0 || index >= node(a).value.cols()) throw std::out_of_range("tape column: index out of range");
    Node n = make_node(Op::Column, id_of(a));
    n.index = index;
    return push(std::move(n));
}

Var Tape::row_dot(Var a, Var b) {
    require_same_shape(node(a).value, node(b).value, "row_dot");
    return push(make_node(Op::RowDot, id_of(a), id_of(b)));
}

Var Tape::row_squared_norm(Var a) { return push(make_node(Op::RowSquaredNorm, id_of(a))); }
Var Tape::sum(Var a) { return push(make_node(Op::SumAll, id_of(a))); }
Var Tape::mean(Var a) { return push(make_node(Op::MeanAll, id_of(a))); }

Var Tape::custom(std::shared_ptr<const CustomOp> op, Var input) {
    if (!op) throw std::invalid_argument("tape custom: null op");
    Node n = make_node(Op::Custom, id_of(input));
    n.custom = std::move(op);
    return push(std::move(n));
}

Mat Tape::evaluate(const Node& n) const {
    const auto in = [&](int id) -> const Mat& { return nodes_[static_cast<std::size_t>(id)].value; };
    switch (n.op) {
        case Op::Leaf: return n.value;
        case Op::MatMul: return in(n.a) * in(n.b);
        case Op::MatMulT: return in(n.a) * in(n.b).transpose();
        case Op::Add: return in(n.a) + in(n.b);
        case Op::Sub: return in(n.a) - in(n.b);
        case Op::Mul: return in(n.a).cwiseProduct(in(n.b));
        case Op::Div: return in(n.a).cwiseQuotient(in(n.b));
        case Op::AddRow: return in(n.a).rowwise() + in(n.b).row(0);
        case Op::MulCol: return in(n.b).col(0).asDiagonal() * in(n.a);
        case Op::Scale: return n.scalar * in(n.a);
        case Op::AddScalar: return (in(n.a).array() + n.scalar).matrix();
        case Op::Tanh: return smooth_tanh(in(n.a));
        case Op::Sin: return in(n.a).array().sin().matrix();
        case Op::Cos: return in(n.a).array().cos().matrix();
        case Op::Square: return in(n.a).array().square().matrix();
        case Op::ConcatCols: {
            const Mat& a = in(n.a);
            const Mat& b = in(n.b);
            Mat out(a.rows(), a.cols() + b.cols());
            out << a, b;
            return out;
        }
        case Op::Column: return in(n.a).col(n.index);
        case Op::RowDot: return in(n.a).cwiseProduct(in(n.b)).rowwise().sum();
        case Op::RowSquaredNorm: return in(n.a).rowwise().squaredNorm();
        case Op::SumAll: return Mat::Constant(1, 1, in(n.a).sum());
        case Op::MeanAll: return Mat::Constant(1, 1, in(n.a).mean());
        case Op::Custom: return n.custom->forward(in(n.a));
    }
    throw std::logic_error("tape: unknown op");
}

void Tape::propagate(const Node& n) {
    const Mat& g = n.adjoint;
    auto& A = nodes_[static_cast<std::size_t>(n.a)];
    switch (n.op) {
        case Op::Leaf: return;
        case Op::MatMul: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint.noalias() += g * B.value.transpose();
            B.adjoint.noalias() += A.value.transpose() * g;
            return;
        }
        case Op::MatMulT: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint.noalias() += g * B.value;
            B.adjoint.noalias() += g.transpose() * A.value;
            return;
        }
        case Op::Add:
            A.adjoint += g;
            nodes_[static_cast<std::size_t>(n.b)].adjoint += g;
            return;
        case Op::Sub:
            A.adjoint += g;
            nodes_[static_cast<std::size_t>(n.b)].adjoint -= g;
            return;
        case Op::Mul: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint += g.cwiseProduct(B.value);
            B.adjoint += g.cwiseProduct(A.value);
            return;
        }
        case Op::Div: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint += g.cwiseQuotient(B.value);
            B.adjoint -= g.cwiseProduct(n.value).cwiseQuotient(B.value);
            return;
        }
        case Op::AddRow:
            A.adjoint += g;
            nodes_[static_cast<std::size_t>(n.b)].adjoint += g.colwise().sum();
            return;
        case Op::MulCol: {
            auto& C = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint += C.value.col(0).asDiagonal() * g;
            C.adjoint += g.cwiseProduct(A.value).rowwise().sum();
            return;
        }
        case Op::Scale: A.adjoint += n.scalar * g; return;
        case Op::AddScalar: A.adjoint += g; return;
        case Op::Tanh: A.adjoint += (g.array() * (1.0 - n.value.array().square())).matrix(); return;
        case Op::Sin: A.adjoint += (g.array() * A.value.array().cos()).matrix(); return;
        case Op::Cos: A.adjoint -= (g.array() * A.value.array().sin()).matrix(); return;
        case Op::Square: A.adjoint += 2.0 * g.cwiseProduct(A.value); return;
        case Op::ConcatCols: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint += g.leftCols(A.value.cols());
            B.adjoint += g.rightCols(B.value.cols());
            return;
        }
        case Op::Column: A.adjoint.col(n.index) += g.col(0); return;
        case Op::RowDot: {
            auto& B = nodes_[static_cast<std::size_t>(n.b)];
            A.adjoint += g.col(0).asDiagonal() * B.value;
            B.adjoint += g.col(0).asDiagonal() * A.value;
            return;
        }
        case Op::RowSquaredNorm: A.adjoint += 2.0 * (g.col(0).asDiagonal() * A.value); return;
        case Op::SumAll: A.adjoint.array() += g(0, 0); return;
        case Op::MeanAll: A.adjoint.array() += g(0, 0) / static_cast<double>(A.value.size()); return;
        case Op::Custom: A.adjoint += n.custom->backward(A.value, n.value, g); return;
    }
}

void Tape::backward(Var output) {
    const int root = id_of(output);
    const Mat& out = nodes_[static_cast<std::size_t>(root)].value;
    if (out.rows() != 1 || out.cols() != 1)
        throw std::invalid_argument("tape backward: output must be a scalar (1x1) node");
    for (int i = 0; i <= root; ++i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        n.adjoint.setZero(n.value.rows(), n.value.cols());
    }
    nodes_[static_cast<std::size_t>(root)].adjoint(0, 0) = 1.0;
    backward_root_ = root;
    for (int i = root; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.op != Op::Leaf) propagate(n);
    }
}

void Tape::set_leaf(Var leaf, Mat value) {
    Node& n = nodes_[static_cast<std::size_t>(id_of(leaf))];
    if (n.op != Op::Leaf) throw std::invalid_argument("tape set_leaf: node is not a leaf");
    if (n.value.rows() != value.rows() || n.value.cols() != value.cols())
        throw std::invalid_argument("tape set_leaf: shape mismatch");
    n.value = std::move(value);
    backward_root_ = -1;
}

void Tape::recompute() {
    for (Node& n : nodes_)
        if (n.op != Op::Leaf) n.value = evaluate(n);
    backward_root_ = -1;
}

void Tape::verify_replay() const {
    // Evaluate against a scratch copy so recorded values stay untouched.
    Tape scratch;
    scratch.nodes_.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node n = nodes_[i];
        if (n.op != Op::Leaf) n.value = scratch.evaluate(n);
        const Mat& recorded = nodes_[i].value;
        if (n.value.rows() != recorded.rows() || n.value.cols() != recorded.cols() ||
            std::memcmp(n.value.data(), recorded.data(), sizeof(double) * static_cast<std::size_t>(recorded.size())) != 0)
            throw std::logic_error("tape replay mismatch at node " + std::to_string(i));
        scratch.nodes_.push_back(std::move(n));
    }
}

}  // namespace hamflow
