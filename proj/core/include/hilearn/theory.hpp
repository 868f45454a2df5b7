#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilearn/hierarchy.hpp"
#include "hilearn/rng.hpp"

namespace hilearn::theory {

using Eigen::MatrixXd;

// Exact finite joint pmf over X1 x X2 x Y. X1 carries the invariant signal,
// X2 the domain-specific factor an adversary may rewire.
struct DiscreteEnv {
  int x1_size = 0;
  int x2_size = 0;
  int y_size = 0;
  std::vector<double> pmf;  // [(x1 * x2_size + x2) * y_size + y]

  double p(int x1, int x2, int y) const {
    return pmf[(x1 * x2_size + x2) * y_size + y];
  }
  double& at(int x1, int x2, int y) {
    return pmf[(x1 * x2_size + x2) * y_size + y];
  }
  void validate(double tol = 1e-12) const;

  MatrixXd marginal_x1y() const;            // x1_size x y_size
  Eigen::VectorXd marginal_y() const;
  double coarse_mass(const HierarchyMap& hier, int z) const;
};

// Coordinate projection: which blocks of X = X1 x X2 the feature map keeps.
struct Projection {
  bool use_x1 = false;
  bool use_x2 = false;

  bool has_x2() const { return use_x2; }
  int cell_count(int x1_size, int x2_size) const {
    return (use_x1 ? x1_size : 1) * (use_x2 ? x2_size : 1);
  }
  int cell(int x1, int x2, int x2_size) const {
    int c = 0;
    if (use_x1) c = x1;
    if (use_x2) c = c * x2_size + x2;
    return c;
  }
  bool operator==(const Projection&) const = default;
};

// Candidate feature maps, one per hyperparameter value. Exactly the grid a
// selection criterion ranges over; `lambda_I` indexes the projection onto X1.
struct ProjectionFamily {
  std::vector<Projection> lambdas;
  int lambda_I = -1;

  void validate() const;
};

// Reference environment plus listed auxiliary environments, all sharing the
// same P(X1, Y) marginal. The unlisted rest of the environment set is encoded
// implicitly: the worst case over it is computed exactly, not enumerated.
struct EnvFamily {
  DiscreteEnv reference;
  std::vector<DiscreteEnv> ad_envs;

  void validate(double tol = 1e-9) const;
};

// p(y | feature cell) learned perfectly from the reference env. Cells whose
// feature value has zero reference probability are marked undefined and are
// never queried by downstream computations.
struct ConditionalTable {
  Projection proj;
  MatrixXd probs;                 // cell_count x y_size rows summing to 1
  std::vector<uint8_t> defined;   // per cell
  Eigen::VectorXd cell_mass;      // reference probability of each cell

  double coarse_prob(const HierarchyMap& hier, int cell, int z) const;
};

ConditionalTable exact_conditional(const DiscreteEnv& env, Projection proj);

enum class RiskLevel { kFine, kCoarse };

// Integral of -log p(label | feature) under the env. Coarse level pushes the
// predictor forward through g. Returns +inf if the predictor puts zero mass
// on a support point (infinite-risk sentinel).
double exact_risk(const DiscreteEnv& env, const ConditionalTable& predictor,
                  RiskLevel level, const HierarchyMap* hierarchy = nullptr);

// E[-log p(Y | feature, Y in g^-1(z)) | g(Y) = z] under `env`.
double exact_correction_term(const DiscreteEnv& env,
                             const ConditionalTable& predictor,
                             const HierarchyMap& hierarchy, int z);

// Exact worst case over every environment sharing the reference P(X1, Y):
// the adversary places, for each (x1, y), all conditional mass on the x2
// maximizing -log p(y | feature(x1, x2)).
double r_ood_exact(const EnvFamily& family, Projection proj,
                   const ConditionalTable& p_star);

enum class CvCriterion { kMethodI, kMethodII };

// The population-level selection criteria the two CV methods estimate.
double r_cv_exact(const EnvFamily& family, Projection proj,
                  const ConditionalTable& p_star, CvCriterion method,
                  const HierarchyMap& hierarchy);

struct BetaValues {
  double beta = 0.0;         // H(Y* | X1*)
  double beta_lambda = 0.0;  // beta minus the ambiguous-label correction sum
};

BetaValues beta_values(const EnvFamily& family, Projection proj,
                       const ConditionalTable& p_star,
                       const HierarchyMap& hierarchy);

// (d)  : some listed ad env is supported where the reference coarse
//        conditional is <= e^-beta - eps.
// (d)' : same with the milder threshold e^-beta_lambda - eps.
// (A)  : for every reachable X1-part value and every fine label some x2 value
//        pushes the reference conditional above (1 - e^-beta) + eps.
// (A)' : same with beta_lambda.
enum class Condition { kD, kDPrime, kA, kAPrime };

struct ConditionVerdict {
  int lambda = -1;
  bool applicable = false;  // false when the projection has no X2 component
  bool satisfied = false;
  int witness_env = -1;     // ad env certifying (d)/(d)', -1 otherwise
  std::string detail;
};

std::vector<ConditionVerdict> check_condition(const EnvFamily& family,
                                              const ProjectionFamily& projections,
                                              Condition which, double epsilon,
                                              const HierarchyMap& hierarchy);

// Member of the implicit environment set that concentrates P(X2 | X1, Y) on
// the minimizer of the reference coarse conditional (Dirac construction).
// Ties break to the smallest x2 index.
DiscreteEnv construct_adversarial_env(const EnvFamily& family, Projection proj,
                                      const HierarchyMap& hierarchy);

struct InclusionResult {
  enum class Verdict { kHolds, kViolated, kUnconstrained };
  Verdict verdict = Verdict::kUnconstrained;
  std::vector<double> r_cv;
  std::vector<double> r_ood;
  std::vector<int> argmin_cv;
  std::vector<int> argmin_ood;
  // Violating lambda when violated; condition-failing lambda when the
  // precondition does not hold and the theorem places no constraint.
  int witness_lambda = -1;
  std::string note;

  nlohmann::ordered_json to_json() const;
};

// Computes both argmin sets over the projection grid and checks inclusion of
// the CV argmin in the o.o.d. argmin, gated on the matching condition.
InclusionResult verify_argmin_inclusion(const EnvFamily& family,
                                        const ProjectionFamily& projections,
                                        CvCriterion method,
                                        const HierarchyMap& hierarchy,
                                        double epsilon);

// A full verifier instance: family, grid, hierarchy, epsilon.
struct Instance {
  EnvFamily family;
  ProjectionFamily projections;
  std::vector<int> hierarchy_table;
  double epsilon = 1e-6;

  HierarchyMap hierarchy() const { return HierarchyMap::from_table(hierarchy_table); }
};

struct RandomFamilyOptions {
  int max_x1 = 3;
  int max_y = 4;  // x2 matches y so every label has a dominant x2 value
  double dirac_weight = 0.95;
  double epsilon = 1e-6;
};

// Random instance generator used by the stress suites: the reference env is
// built so that condition (A) holds, the ad envs are the Dirac adversarial
// constructions for every projection with an X2 component, and therefore
// condition (d) holds for the listed grid.
Instance random_instance_satisfying_a(Rng& rng,
                                      const RandomFamilyOptions& opts = {});

// Hand-built instance whose ad env satisfies (d)' but not (d): the corrected
// criterion can still certify selection where the uncorrected one cannot.
Instance milder_condition_instance();

Instance instance_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json instance_to_json(const Instance& inst);

}  // namespace hilearn::theory
