#include "cpmm/economic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpmm/error.hpp"

namespace cpmm::econ {

double Dimension::normalize(double raw) const {
    double v = higher_is_better ? raw / cap : 1.0 - raw / cap;
    return std::clamp(v, 0.0, 1.0);
}

double Dimension::denormalize(double normalized) const {
    return higher_is_better ? normalized * cap : (1.0 - normalized) * cap;
}

DimensionRegistry::DimensionRegistry(std::vector<Dimension> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ValidationError("dimension registry must hold at least one dimension");
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i].cap <= 0.0) throw ValidationError("dimension '" + dims_[i].name + "' needs a positive cap");
        for (std::size_t j = 0; j < i; ++j)
            if (dims_[i].name == dims_[j].name) throw ValidationError("duplicate dimension '" + dims_[i].name + "'");
    }
}

std::size_t DimensionRegistry::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i)
        if (dims_[i].name == name) return i;
    throw ValidationError("unknown quality dimension '" + name + "'");
}

bool DimensionRegistry::contains(const std::string& name) const {
    return std::any_of(dims_.begin(), dims_.end(), [&](const Dimension& d) { return d.name == name; });
}

QualityVector::QualityVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ValidationError("quality vector must have d >= 1");
    for (double v : values_)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("quality value outside [0,1]");
}

bool QualityVector::dominates(const QualityVector& other) const {
    if (size() != other.size()) throw DimensionError("quality dimension mismatch");
    for (std::size_t i = 0; i < size(); ++i)
        if (values_[i] < other.values_[i]) return false;
    return true;
}

AgentState::AgentState(double load_, double resource_budget_, long epoch_)
    : load(load_), resource_budget(resource_budget_), epoch(epoch_) {
    if (!(load >= 0.0 && load <= 1.0)) throw ValidationError("agent load outside [0,1]");
    if (!(resource_budget >= 0.0)) throw ValidationError("negative resource budget");
}

QualityBox QualityBox::full(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

void QualityBox::validate() const {
    if (lo.empty() || lo.size() != hi.size()) throw DimensionError("quality box bounds mismatch");
    for (std::size_t j = 0; j < lo.size(); ++j) {
        if (!(lo[j] >= 0.0 && hi[j] <= 1.0)) throw ValidationError("quality box outside [0,1]^d");
        if (lo[j] > hi[j]) throw ValidationError("quality box empty on dimension " + std::to_string(j));
    }
}

void CapabilitySpec::validate() const {
    if (id.empty()) throw ValidationError("capability id is empty");
    region.validate();
}

StateFn constant(double value) {
    return [value](const AgentState&) { return value; };
}

void BuyerPreference::validate(double tolerance) const {
    if (weights.empty() || weights.size() != dim_valuations.size())
        throw DimensionError("preference weights/valuations mismatch");
    static constexpr double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t j = 0; j < dim_valuations.size(); ++j) {
        const auto& v = dim_valuations[j];
        double vals[5];
        for (int i = 0; i < 5; ++i) vals[i] = v(grid[i]);
        for (int i = 1; i < 5; ++i)
            if (vals[i] < vals[i - 1] - tolerance)
                throw ValidationError("valuation " + std::to_string(j) + " is decreasing");
        for (int i = 1; i < 4; ++i)
            if (vals[i] < 0.5 * (vals[i - 1] + vals[i + 1]) - tolerance)
                throw ValidationError("valuation " + std::to_string(j) + " is not concave");
        if (vals[2] < 0.5 * (vals[0] + vals[4]) - tolerance)
            throw ValidationError("valuation " + std::to_string(j) + " is not concave");
    }
}

void SellerCostModel::validate(const std::vector<AgentState>& probes) const {
    if (coefficients.empty() || coefficients.size() != exponents.size())
        throw DimensionError("cost coefficients/exponents mismatch");
    for (double b : exponents)
        if (!(b > 1.0)) throw ValidationError("cost exponent must exceed 1");
    for (const auto& s : probes) {
        if (!(fixed_cost(s) >= 0.0)) throw ValidationError("negative fixed cost");
        for (const auto& a : coefficients)
            if (!(a(s) >= 0.0)) throw ValidationError("negative cost coefficient");
    }
}

double eval_valuation(const BuyerPreference& pref, const QualityVector& q, const AgentState& s) {
    if (q.size() != pref.dimension()) throw DimensionError("valuation: quality dimension mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) total += pref.weights[j](s) * pref.dim_valuations[j](q[j]);
    return total;
}

double eval_utility(const BuyerPreference& pref, const QualityVector& q, double price, const AgentState& s) {
    if (!(price >= 0.0)) throw ValidationError("utility: negative price");
    return eval_valuation(pref, q, s) - price;
}

double eval_cost(const SellerCostModel& model, const QualityVector& q, const AgentState& s) {
    if (q.size() != model.dimension()) throw DimensionError("cost: quality dimension mismatch");
    double total = model.fixed_cost(s);
    for (std::size_t j = 0; j < q.size(); ++j) total += model.coefficients[j](s) * std::pow(q[j], model.exponents[j]);
    return total;
}

bool quality_feasible(const CapabilitySpec& cap, const QualityVector& q) {
    if (q.size() != cap.region.lo.size()) throw DimensionError("feasibility: quality dimension mismatch");
    for (std::size_t j = 0; j < q.size(); ++j)
        if (q[j] < cap.region.lo[j] || q[j] > cap.region.hi[j]) return false;
    return true;
}

BeliefState::BeliefState(std::vector<double> support, std::vector<double> mass, int memory_window)
    : support_(std::move(support)), mass_(std::move(mass)), memory_window_(memory_window) {
    if (support_.empty() || support_.size() != mass_.size()) throw DimensionError("belief support/mass mismatch");
    if (memory_window_ < 0) throw ValidationError("negative memory window");
    for (std::size_t i = 1; i < support_.size(); ++i)
        if (!(support_[i] > support_[i - 1])) throw ValidationError("belief support must be strictly increasing");
    double sum = 0.0;
    for (double m : mass_) {
        if (!(m >= 0.0)) throw ValidationError("negative belief mass");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("belief mass must sum to 1");
    prior_ = mass_;
}

BeliefState BeliefState::uniform_grid(double lo, double hi, std::size_t atoms, int memory_window) {
    if (atoms < 2 || !(hi > lo)) throw ValidationError("belief grid needs >= 2 atoms over a non-empty range");
    std::vector<double> support(atoms);
    for (std::size_t i = 0; i < atoms; ++i)
        support[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(atoms - 1);
    return BeliefState(std::move(support), std::vector<double>(atoms, 1.0 / static_cast<double>(atoms)), memory_window);
}

double BeliefState::mean() const {
    return std::inner_product(support_.begin(), support_.end(), mass_.begin(), 0.0);
}

double BeliefState::quantile(double p) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i) {
        acc += mass_[i];
        if (acc >= p - 1e-12) return support_[i];
    }
    return support_.back();
}

double BeliefState::median() const { return quantile(0.5); }

BeliefState update_beliefs(const BeliefState& belief, const std::function<double(double)>& likelihood) {
    const auto& support = belief.support();
    std::vector<double> post(support.size());
    double z = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        double l = likelihood(support[i]);
        if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("likelihood must be finite and non-negative");
        post[i] = belief.mass()[i] * l;
        z += post[i];
    }
    if (!(z > 0.0)) throw Error("degenerate evidence: posterior mass is zero");
    for (double& m : post) m /= z;
    if (belief.memory_window() > 0) {
        double lambda = 1.0 - 1.0 / static_cast<double>(belief.memory_window());
        for (std::size_t i = 0; i < post.size(); ++i) post[i] = lambda * post[i] + (1.0 - lambda) * belief.prior()[i];
    }
    BeliefState next = belief;
    next.mass_ = std::move(post);
    next.updates_ = belief.updates_ + 1;
    return next;
}

}  // namespace cpmm::econ
