#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace gestimate {

enum class VarKind { treatment, outcome, covariate, time };

// index written as an absolute time, or relative to the source time m or target time k
enum class IndexBase { absolute, current, target };

struct VarRef {
  VarKind kind = VarKind::covariate;
  int covariate = -1;
  IndexBase base = IndexBase::current;
  int offset = 0;

  int resolve(int m, int k) const;
};

class VariableSource {
 public:
  virtual ~VariableSource() = default;
  virtual double value(VarKind kind, int covariate, int time) const = 0;
};

struct Symbols {
  std::vector<std::string> covariates;
  int covariate_index(std::string_view name) const;
};

// small arithmetic language used for blip, nuisance and regime feature maps:
//   numbers, + - * /, unary minus, parentheses, comparisons < > <= >= (0/1 valued)
//   A, Y, t and covariate names, optionally indexed as X[2], X[m-1], X[k]
//   a bare name means the current time m; L0 is shorthand for L[0]
class Expression {
 public:
  Expression();
  static Expression parse(std::string_view text, const Symbols& symbols);
  static Expression constant(double value);

  double eval(const VariableSource& src, int m, int k = -1) const;
  const std::string& text() const { return text_; }

  // every additive term carries a multiplicative factor matching pred
  bool has_factor(const std::function<bool(const VarRef&)>& pred) const;
  bool references(const std::function<bool(const VarRef&)>& pred) const;
  bool is_constant() const;

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace gestimate
