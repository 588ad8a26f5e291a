#include "plm/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace plm::ad {

namespace {
constexpr double kZeroNormEps = 1e-12;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace

Node* Tape::leaf(Eigen::MatrixXd value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Node* Tape::make(const char* op, Eigen::MatrixXd value, std::initializer_list<Node*> parents,
                 std::function<void(const Node&)> backward_fn) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->op = op;
  for (const Node* p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

void Tape::backward(Node* loss) {
  require(loss != nullptr && loss->is_scalar(), "non-scalar loss");
  for (auto& node : nodes_) {
    if (node->requires_grad)
      node->grad = Eigen::MatrixXd::Zero(node->value.rows(), node->value.cols());
  }
  if (!loss->requires_grad) return;  // constant loss: every grad stays zero
  loss->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* node = it->get();
    if (node->requires_grad && node->backward_fn) node->backward_fn(*node);
  }
}

namespace {
// Accumulate into a parent only when it participates in differentiation.
void acc(Node* parent, const Eigen::MatrixXd& g) {
  if (parent->requires_grad) parent->grad += g;
}
}  // namespace

Node* add(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "shape mismatch");
  return t.make("add", a->value + b->value, {a, b}, [a, b](const Node& n) {
    acc(a, n.grad);
    acc(b, n.grad);
  });
}

Node* sub(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "shape mismatch");
  return t.make("sub", a->value - b->value, {a, b}, [a, b](const Node& n) {
    acc(a, n.grad);
    acc(b, -n.grad);
  });
}

Node* elementwise_mul(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "shape mismatch");
  return t.make("mul", a->value.cwiseProduct(b->value), {a, b}, [a, b](const Node& n) {
    acc(a, n.grad.cwiseProduct(b->value));
    acc(b, n.grad.cwiseProduct(a->value));
  });
}

Node* scale(Tape& t, Node* a, double c) {
  return t.make("scale", a->value * c, {a}, [a, c](const Node& n) { acc(a, c * n.grad); });
}

Node* matmul(Tape& t, Node* a, Node* b) {
  require(a->value.cols() == b->value.rows(), "shape mismatch");
  return t.make("matmul", a->value * b->value, {a, b}, [a, b](const Node& n) {
    acc(a, n.grad * b->value.transpose());
    acc(b, a->value.transpose() * n.grad);
  });
}

Node* relu(Tape& t, Node* a) {
  return t.make("relu", a->value.cwiseMax(0.0), {a}, [a](const Node& n) {
    acc(a, n.grad.cwiseProduct((a->value.array() > 0.0).cast<double>().matrix()));
  });
}

Node* row_l2_normalize(Tape& t, Node* a) {
  Eigen::MatrixXd out = a->value;
  Eigen::VectorXd norms = a->value.rowwise().norm();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (norms(i) < kZeroNormEps)
      out.row(i).setZero();
    else
      out.row(i) /= norms(i);
  }
  return t.make("rownorm", std::move(out), {a}, [a, norms](const Node& n) {
    if (!a->requires_grad) return;
    // d(x/|x|) projects the upstream grad onto the row's tangent space.
    Eigen::MatrixXd g(n.value.rows(), n.value.cols());
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      if (norms(i) < kZeroNormEps) {
        g.row(i).setZero();
      } else {
        const auto y = n.value.row(i);
        g.row(i) = (n.grad.row(i) - y * n.grad.row(i).dot(y)) / norms(i);
      }
    }
    a->grad += g;
  });
}

Node* rowwise_dot(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "shape mismatch");
  Eigen::MatrixXd out = a->value.cwiseProduct(b->value).rowwise().sum();
  return t.make("rowdot", std::move(out), {a, b}, [a, b](const Node& n) {
    const Eigen::VectorXd g = n.grad.col(0);
    if (a->requires_grad) a->grad += g.asDiagonal() * b->value;
    if (b->requires_grad) b->grad += g.asDiagonal() * a->value;
  });
}

Node* dot(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          "shape mismatch");
  const double v = a->value.cwiseProduct(b->value).sum();
  return t.make("dot", Eigen::MatrixXd::Constant(1, 1, v), {a, b}, [a, b](const Node& n) {
    acc(a, n.grad(0, 0) * b->value);
    acc(b, n.grad(0, 0) * a->value);
  });
}

Node* hconcat(Tape& t, Node* a, Node* b) {
  require(a->value.rows() == b->value.rows(), "shape mismatch");
  Eigen::MatrixXd out(a->value.rows(), a->value.cols() + b->value.cols());
  out << a->value, b->value;
  const Eigen::Index ca = a->value.cols();
  return t.make("hconcat", std::move(out), {a, b}, [a, b, ca](const Node& n) {
    acc(a, n.grad.leftCols(ca));
    acc(b, n.grad.rightCols(n.grad.cols() - ca));
  });
}

Node* row_log_sum_exp(Tape& t, Node* a) {
  const Eigen::VectorXd shift = a->value.rowwise().maxCoeff();
  Eigen::VectorXd lse =
      ((a->value.colwise() - shift).array().exp().rowwise().sum()).log().matrix() + shift;
  return t.make("rowlse", lse, {a}, [a](const Node& n) {
    if (!a->requires_grad) return;
    // softmax rows recovered from the stored result: exp(x - lse).
    const Eigen::MatrixXd soft = (a->value.colwise() - n.value.col(0)).array().exp();
    a->grad += n.grad.col(0).asDiagonal() * soft;
  });
}

Node* sum(Tape& t, Node* a) {
  return t.make("sum", Eigen::MatrixXd::Constant(1, 1, a->value.sum()), {a},
                [a](const Node& n) {
                  acc(a, Eigen::MatrixXd::Constant(a->value.rows(), a->value.cols(), n.grad(0, 0)));
                });
}

Node* mean_over_rows(Tape& t, Node* a) {
  const double inv_n = 1.0 / static_cast<double>(a->value.rows());
  Eigen::MatrixXd out = a->value.colwise().mean();
  return t.make("rowmean", std::move(out), {a}, [a, inv_n](const Node& n) {
    acc(a, (n.grad * inv_n).replicate(a->value.rows(), 1));
  });
}

Node* add_rowvec(Tape& t, Node* m, Node* v) {
  require(v->value.rows() == 1 && v->value.cols() == m->value.cols(), "shape mismatch");
  Eigen::MatrixXd out = m->value.rowwise() + v->value.row(0);
  return t.make("addrow", std::move(out), {m, v}, [m, v](const Node& n) {
    acc(m, n.grad);
    acc(v, n.grad.colwise().sum());
  });
}

Node* detach(Tape& t, Node* a) { return t.constant(a->value); }

double gradcheck(const std::function<double(const std::vector<Eigen::MatrixXd>&)>& value_fn,
                 const std::function<std::vector<Eigen::MatrixXd>(
                     const std::vector<Eigen::MatrixXd>&)>& grad_fn,
                 std::vector<Eigen::MatrixXd> params, double h,
                 const std::vector<Eigen::MatrixXd>* check_mask) {
  if (h <= 0.0) throw std::invalid_argument("step must be positive");
  const std::vector<Eigen::MatrixXd> analytic = grad_fn(params);
  if (analytic.size() != params.size())
    throw std::invalid_argument("gradient count does not match parameter count");

  double max_err = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      if (check_mask && (*check_mask)[p](i) == 0.0) continue;
      const double saved = params[p](i);
      params[p](i) = saved + h;
      const double f_plus = value_fn(params);
      params[p](i) = saved - h;
      const double f_minus = value_fn(params);
      params[p](i) = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[p](i);
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace plm::ad
