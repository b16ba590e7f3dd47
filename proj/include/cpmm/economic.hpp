#pragma once

// Agent preference, cost, capability and belief models.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace cpmm::econ {

/// One registered quality dimension. Raw measurements are mapped into [0, 1]
/// with higher-is-better orientation; `cap` is the raw value mapped to 0 for
/// lower-is-better units (e.g. latency in ms).
struct Dimension {
    std::string name;
    std::string unit;
    bool higher_is_better = true;
    double cap = 1.0;

    /// Maps a raw measurement into the normalized box.
    double normalize(double raw) const;
    double denormalize(double normalized) const;
};

class DimensionRegistry {
public:
    DimensionRegistry() = default;
    explicit DimensionRegistry(std::vector<Dimension> dims);

    std::size_t size() const { return dims_.size(); }
    const Dimension& operator[](std::size_t i) const { return dims_.at(i); }
    /// Index of a named dimension; throws ValidationError when absent.
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<Dimension>& dimensions() const { return dims_; }

private:
    std::vector<Dimension> dims_;
};

/// Point of the normalized quality box [0,1]^d.
class QualityVector {
public:
    QualityVector() = default;
    explicit QualityVector(std::vector<double> values);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const QualityVector&) const = default;
    /// Componentwise q >= other.
    bool dominates(const QualityVector& other) const;

private:
    std::vector<double> values_;
};

struct AgentState {
    double load = 0.0;
    double resource_budget = 0.0;
    long epoch = 0;

    AgentState() = default;
    AgentState(double load, double resource_budget, long epoch = 0);
};

/// Axis-aligned feasible quality region.
struct QualityBox {
    std::vector<double> lo;
    std::vector<double> hi;

    static QualityBox full(std::size_t d);
    void validate() const;
};

struct CapabilitySpec {
    std::string id;
    std::string spec_text;
    QualityBox region;
    std::string cost_model_ref;

    void validate() const;
};

using StateFn = std::function<double(const AgentState&)>;
using ScalarFn = std::function<double(double)>;

/// Constant state function.
StateFn constant(double value);

/// Separable valuation v(q,s) = sum_j w_j(s) * v_j(q_j).
struct BuyerPreference {
    std::vector<StateFn> weights;
    std::vector<ScalarFn> dim_valuations;

    std::size_t dimension() const { return weights.size(); }
    /// Checks sizes, non-decreasing v_j and concavity on the probe grid
    /// {0, 0.25, 0.5, 0.75, 1}.
    void validate(double tolerance = 1e-9) const;
};

/// cost(q,s) = fc(s) + sum_j alpha_j(s) * q_j^beta_j with beta_j > 1.
struct SellerCostModel {
    StateFn fixed_cost;
    std::vector<StateFn> coefficients;
    std::vector<double> exponents;

    std::size_t dimension() const { return exponents.size(); }
    /// Checks beta_j > 1 and non-negative fc, alpha_j at the given probe states.
    void validate(const std::vector<AgentState>& probes = {AgentState{}}) const;
};

double eval_valuation(const BuyerPreference& pref, const QualityVector& q, const AgentState& s);
double eval_utility(const BuyerPreference& pref, const QualityVector& q, double price, const AgentState& s);
double eval_cost(const SellerCostModel& model, const QualityVector& q, const AgentState& s);
bool quality_feasible(const CapabilitySpec& cap, const QualityVector& q);

/// Discrete posterior over one scalar private parameter.
///
/// memory_window == 0 means unbounded memory. For k > 0 each update is
/// followed by exponential forgetting toward the prior with factor
/// lambda = 1 - 1/k: mass' = lambda * posterior + (1 - lambda) * prior.
class BeliefState {
public:
    BeliefState(std::vector<double> support, std::vector<double> mass, int memory_window = 0);

    /// Uniform mass over `atoms` evenly spaced points in [lo, hi].
    static BeliefState uniform_grid(double lo, double hi, std::size_t atoms, int memory_window = 0);

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& mass() const { return mass_; }
    const std::vector<double>& prior() const { return prior_; }
    int memory_window() const { return memory_window_; }
    long updates() const { return updates_; }

    double mean() const;
    /// Smallest atom whose cumulative mass reaches one half.
    double median() const;
    double quantile(double p) const;

private:
    friend BeliefState update_beliefs(const BeliefState&, const std::function<double(double)>&);
    std::vector<double> support_;
    std::vector<double> mass_;
    std::vector<double> prior_;
    int memory_window_ = 0;
    long updates_ = 0;
};

/// Bayes' rule on the grid. Throws ValidationError on negative likelihood and
/// Error("degenerate evidence") when the evidence has zero probability.
BeliefState update_beliefs(const BeliefState& belief, const std::function<double(double)>& likelihood);

}  // namespace cpmm::econ
