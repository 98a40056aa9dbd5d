#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/expr.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

enum class Link { identity, log, logit };

const char* link_name(Link link);
Link parse_link(const std::string& name);

// one additive piece of a blip: psi[psi_index] * expression, effect of A[source_m] on Y[target_k]
struct BlipTerm {
  int target_k = 1;
  int source_m = 0;
  Expression expression;
  int psi_index = 0;
};

class BlipSpec {
 public:
  BlipSpec() = default;
  BlipSpec(Link link, std::vector<BlipTerm> terms, int p, std::vector<std::string> psi_names = {});

  Link link() const { return link_; }
  int p() const { return p_; }
  const std::vector<BlipTerm>& terms() const { return terms_; }
  const std::vector<std::string>& psi_names() const { return psi_names_; }
  int max_source() const;
  int max_target() const;
  // throws when a term targets an undeclared outcome time or a source beyond K
  void check_panel(const Panel& panel) const;

 private:
  Link link_ = Link::identity;
  std::vector<BlipTerm> terms_;
  int p_ = 0;
  std::vector<std::string> psi_names_;
};

// shift-form distribution model: U_{m,k} = (last argument) - sum psi_j * feature_j; features may read
// Y[m+1..k-1], which resolve to the blipped-down outcomes of the later time
class SndmSpec {
 public:
  SndmSpec() = default;
  SndmSpec(std::vector<BlipTerm> terms, int p, std::vector<std::string> psi_names = {});

  int p() const { return p_; }
  const std::vector<BlipTerm>& terms() const { return terms_; }
  const std::vector<std::string>& psi_names() const { return psi_names_; }
  void check_panel(const Panel& panel) const;

 private:
  std::vector<BlipTerm> terms_;
  int p_ = 0;
  std::vector<std::string> psi_names_;
};

// accelerated failure time blip: residual time in interval m is scaled by exp(sum psi_j feature_j)
struct SaftmTerm {
  int source_m = -1;  // -1: applies to every interval
  Expression expression;
  int psi_index = 0;
};

class SaftmSpec {
 public:
  SaftmSpec() = default;
  SaftmSpec(std::vector<SaftmTerm> terms, int p, std::vector<std::string> psi_names = {});

  int p() const { return p_; }
  const std::vector<SaftmTerm>& terms() const { return terms_; }
  const std::vector<std::string>& psi_names() const { return psi_names_; }
  // d(log scale)/d(psi) for interval m evaluated on h (h.m() == m)
  Eigen::VectorXd features(const HistoryView& h) const;

 private:
  std::vector<SaftmTerm> terms_;
  int p_ = 0;
  std::vector<std::string> psi_names_;
};

class MeanPredictor {
 public:
  virtual ~MeanPredictor() = default;
  // E(Y | L, A) at the history h (treatment at h.m() visible)
  virtual double mean(const HistoryView& h) const = 0;
};

// derivative of gamma*_{m,k} with respect to psi at history h (h.m() == m)
Eigen::VectorXd blip_features(const BlipSpec& spec, const HistoryView& h, int m, int k);
double eval_blip(const BlipSpec& spec, const HistoryView& h, const Eigen::VectorXd& psi, int m, int k);

double transform_point(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record,
                       const Eigen::VectorXd& psi, const MeanPredictor* outcome_model = nullptr);

// outcome times after m, in the order used for U*_m components
std::vector<int> components_after(const Panel& panel, int m);

// sum over l = m..k-1 of the blip features of gamma*_{l,k}; U*_{m,k} = Y_k - G psi (identity)
Eigen::VectorXd cumulative_features(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record, int m,
                                    int k);

Eigen::VectorXd blipdown_snmm(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record,
                              const Eigen::VectorXd& psi, int m);
Eigen::MatrixXd blip_jacobian(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record,
                              const Eigen::VectorXd& psi, int m);

// full backward recursion: u[m][j] holds U_{m,m+1+j}
std::vector<std::vector<double>> sndm_recursion(const SndmSpec& spec, const Panel& panel,
                                                const SubjectRecord& record, const Eigen::VectorXd& psi);
Eigen::VectorXd blipdown_sndm(const SndmSpec& spec, const Panel& panel, const SubjectRecord& record,
                              const Eigen::VectorXd& psi, int m);
// feature vector of gamma_{m,k} at h (m = h.m(), treatments may be overridden), with earlier
// outcomes substituted from the recursion u
Eigen::VectorXd sndm_features(const SndmSpec& spec, const HistoryView& h, const std::vector<std::vector<double>>& u,
                              int k);
// same features with every earlier outcome replaced by its blipped-down value U_{m,j}; these do not
// depend on A_m at the true psi, which makes them usable as a G-estimation index
Eigen::VectorXd sndm_index_features(const SndmSpec& spec, const HistoryView& h,
                                    const std::vector<std::vector<double>>& u, int k);

}  // namespace gestimate
