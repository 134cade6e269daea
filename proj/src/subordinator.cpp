#include "subdiff/subordinator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "subdiff/rng.hpp"

namespace subdiff {

namespace {

double mean_of(const JumpSizeLaw& law) {
    if (const auto* e = std::get_if<ExpJumps>(&law)) return e->mean;
    if (const auto* f = std::get_if<FixedJumps>(&law)) return f->size;
    const auto& u = std::get<UniformJumps>(law);
    return 0.5 * (u.lo + u.hi);
}

double sample_size(const JumpSizeLaw& law, std::mt19937_64& gen) {
    if (const auto* e = std::get_if<ExpJumps>(&law)) {
        std::exponential_distribution<double> d(1.0 / e->mean);
        return d(gen);
    }
    if (const auto* f = std::get_if<FixedJumps>(&law)) return f->size;
    const auto& u = std::get<UniformJumps>(law);
    std::uniform_real_distribution<double> d(u.lo, u.hi);
    return d(gen);
}

void validate_size_law(const JumpSizeLaw& law) {
    if (const auto* e = std::get_if<ExpJumps>(&law)) {
        if (!(e->mean > 0.0)) throw SpecError("jump size law: Exp mean must be > 0");
    } else if (const auto* f = std::get_if<FixedJumps>(&law)) {
        if (!(f->size > 0.0)) throw SpecError("jump size law: fixed size must be > 0");
    } else {
        const auto& u = std::get<UniformJumps>(law);
        if (!(u.lo >= 0.0) || !(u.hi > u.lo))
            throw SpecError("jump size law: uniform bounds need 0 <= lo < hi");
    }
}

} // namespace

void SubordinatorSpec::validate() const {
    if (!(kappa > 0.0)) throw SpecError("subordinator.kappa must be > 0");
    if (const auto* cp = std::get_if<CompoundPoisson>(&jump_law)) {
        if (!(cp->rate >= 0.0) || !std::isfinite(cp->rate))
            throw SpecError("subordinator.rate must be finite and >= 0");
        validate_size_law(cp->sizes);
    } else if (const auto* ts = std::get_if<TruncatedStable>(&jump_law)) {
        if (!(ts->alpha > 0.0 && ts->alpha < 1.0))
            throw SpecError("subordinator.alpha must lie in (0,1)");
        if (!(ts->scale > 0.0)) throw SpecError("subordinator.scale must be > 0");
        if (!(ts->eps_trunc > 0.0)) throw SpecError("subordinator.eps_trunc must be > 0");
    } else if (const auto* fj = std::get_if<ForcedJumps>(&jump_law)) {
        if (fj->times.size() != fj->sizes.size())
            throw SpecError("forced jumps: times/sizes length mismatch");
        for (std::size_t i = 0; i < fj->times.size(); ++i) {
            if (!(fj->times[i] > 0.0)) throw SpecError("forced jumps: times must be > 0");
            if (!(fj->sizes[i] > 0.0)) throw SpecError("forced jumps: sizes must be > 0");
            if (i > 0 && !(fj->times[i] > fj->times[i - 1]))
                throw SpecError("forced jumps: times must increase");
        }
    }
}

double SubordinatorSpec::effective_drift() const {
    double d = kappa;
    if (const auto* ts = std::get_if<TruncatedStable>(&jump_law)) {
        if (ts->compensate)
            d += ts->scale * std::pow(ts->eps_trunc, 1.0 - ts->alpha) / (1.0 - ts->alpha);
    }
    return d;
}

double SubordinatorSpec::mean_s1() const {
    double m = effective_drift();
    if (const auto* cp = std::get_if<CompoundPoisson>(&jump_law)) {
        m += cp->rate * mean_of(cp->sizes);
    } else if (std::holds_alternative<TruncatedStable>(jump_law)) {
        // integral_eps^inf s nu(ds) = scale * integral_eps^inf s^{-alpha} ds diverges
        // for alpha in (0,1): the truncated stable subordinator has infinite mean.
        m = std::numeric_limits<double>::infinity();
    }
    return m;
}

double SubordinatorPath::value(double r) const {
    double s = drift * r;
    // jumps with time <= r are included (right continuity)
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), r);
    for (auto j = jump_times.begin(); j != it; ++j) s += jump_sizes[j - jump_times.begin()];
    return s;
}

double SubordinatorPath::value_left(double r) const {
    double s = drift * r;
    auto it = std::lower_bound(jump_times.begin(), jump_times.end(), r);
    for (auto j = jump_times.begin(); j != it; ++j) s += jump_sizes[j - jump_times.begin()];
    return s;
}

SubordinatorPath sample_subordinator(const SubordinatorSpec& spec, double horizon_L,
                                     std::uint64_t seed) {
    spec.validate();
    if (!(horizon_L > 0.0)) throw SpecError("horizon_L must be > 0");

    SubordinatorPath path;
    path.horizon = horizon_L;
    path.drift = spec.effective_drift();

    auto gen = make_stream(seed, 0, StreamTag::Subordinator);

    if (const auto* cp = std::get_if<CompoundPoisson>(&spec.jump_law)) {
        if (cp->rate > 0.0) {
            std::exponential_distribution<double> gap(cp->rate);
            double r = gap(gen);
            while (r <= horizon_L) {
                path.jump_times.push_back(r);
                path.jump_sizes.push_back(sample_size(cp->sizes, gen));
                r += gap(gen);
            }
        }
    } else if (const auto* ts = std::get_if<TruncatedStable>(&spec.jump_law)) {
        // jumps above eps arrive at rate scale * eps^{-alpha} / alpha;
        // sizes follow the Pareto tail J = eps * U^{-1/alpha}
        const double rate = ts->scale * std::pow(ts->eps_trunc, -ts->alpha) / ts->alpha;
        std::exponential_distribution<double> gap(rate);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double r = gap(gen);
        while (r <= horizon_L) {
            double u = unif(gen);
            while (u <= 0.0) u = unif(gen);
            path.jump_times.push_back(r);
            path.jump_sizes.push_back(ts->eps_trunc * std::pow(u, -1.0 / ts->alpha));
            r += gap(gen);
        }
    } else if (const auto* fj = std::get_if<ForcedJumps>(&spec.jump_law)) {
        for (std::size_t i = 0; i < fj->times.size(); ++i) {
            if (fj->times[i] <= horizon_L) {
                path.jump_times.push_back(fj->times[i]);
                path.jump_sizes.push_back(fj->sizes[i]);
            }
        }
    }
    return path;
}

InversePoint inverse_at_level(const SubordinatorPath& path, double tau) {
    if (tau <= 0.0) return {0.0, 0.0};
    const auto& jt = path.jump_times;
    const auto& js = path.jump_sizes;
    const std::size_t n = jt.size();

    // scan for the first jump whose post level S_{r_j} reaches tau; c accumulates
    // the jump mass strictly below it (linear scan: per-path jump counts are small)
    double c = 0.0;
    std::size_t j = 0;
    for (; j < n; ++j) {
        double post = path.drift * jt[j] + c + js[j];
        if (post >= tau) break;
        c += js[j];
    }
    if (j < n) {
        double pre = path.drift * jt[j] + c;
        if (tau >= pre) {
            // tau falls inside the jump over-shoot interval [pre, post)
            double post = pre + js[j];
            return {jt[j], post - tau};
        }
    }
    // linear segment: S_r = drift*r + c
    double L = (tau - c) / path.drift;
    if (L > path.horizon)
        throw HorizonError("subordinator path horizon too short for requested level");
    return {L, 0.0};
}

InversePath invert_on_grid(const SubordinatorPath& path, const std::vector<double>& grid,
                           double a) {
    if (grid.size() < 2) throw SpecError("grid needs at least two points");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw SpecError("grid must be strictly increasing");
    if (a < 0.0) throw SpecError("initial offset a must be >= 0");
    const double t0 = grid.front(), T = grid.back();

    // max level reachable: S at horizon
    if (path.value(path.horizon) <= std::max(0.0, T - a))
        throw HorizonError("subordinator path horizon too short for grid");

    // flat intervals in calendar time: [lo_j, hi_j) = [a+pre_j, a+post_j).
    // Node classification below reuses these exact values, so a node that
    // coincides with an inserted knot always lands on the intended side.
    std::vector<double> lo_t, hi_t, run_L;
    {
        double c = 0.0;
        for (std::size_t j = 0; j < path.jump_times.size(); ++j) {
            const double pre = path.drift * path.jump_times[j] + c;
            c += path.jump_sizes[j];
            lo_t.push_back(a + pre);
            hi_t.push_back(a + pre + path.jump_sizes[j]);
            run_L.push_back(path.jump_times[j]);
            if (pre > T - a) break;
        }
    }

    // auxiliary knots: flat-interval endpoints plus the offset boundary a
    std::vector<double> knots;
    if (a > t0 && a < T) knots.push_back(a);
    for (std::size_t j = 0; j < lo_t.size(); ++j) {
        if (hi_t[j] <= t0 || lo_t[j] >= T) continue;
        if (lo_t[j] > t0 && lo_t[j] < T) knots.push_back(lo_t[j]);
        if (hi_t[j] > t0 && hi_t[j] < T) knots.push_back(hi_t[j]);
    }

    InversePath out;
    out.a = a;
    out.drift = path.drift;

    // merge caller grid and knots, dropping exact duplicates
    std::sort(knots.begin(), knots.end());
    out.t.reserve(grid.size() + knots.size());
    out.caller_index.reserve(grid.size());
    std::size_t gi = 0, ki = 0;
    while (gi < grid.size() || ki < knots.size()) {
        bool take_grid;
        if (gi == grid.size())
            take_grid = false;
        else if (ki == knots.size())
            take_grid = true;
        else
            take_grid = grid[gi] <= knots[ki];
        if (take_grid) {
            if (ki < knots.size() && knots[ki] == grid[gi]) ++ki;
            if (!out.t.empty() && out.t.back() == grid[gi]) {
                out.caller_index.push_back(out.t.size() - 1);
            } else {
                out.t.push_back(grid[gi]);
                out.caller_index.push_back(out.t.size() - 1);
            }
            ++gi;
        } else {
            if (out.t.empty() || out.t.back() != knots[ki]) out.t.push_back(knots[ki]);
            ++ki;
        }
    }

    const std::size_t m = out.t.size();
    out.L.resize(m);
    out.R.resize(m);
    out.flat.resize(m);
    out.dL.resize(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
        const double t = out.t[i];
        if (t <= a) {
            out.L[i] = 0.0;
            out.R[i] = a - t;
        } else {
            // classify against the same lo/hi values the knots were built from;
            // anchoring L at the flat-run end keeps L exactly constant on flats
            // and exactly continuous where a sloped segment resumes
            const std::size_t j =
                std::upper_bound(hi_t.begin(), hi_t.end(), t) - hi_t.begin();
            if (j < lo_t.size() && t >= lo_t[j]) {
                out.L[i] = run_L[j];
                out.R[i] = hi_t[j] - t;
            } else if (j > 0) {
                out.L[i] = run_L[j - 1] + (t - hi_t[j - 1]) / path.drift;
                out.R[i] = 0.0;
            } else {
                out.L[i] = (t - a) / path.drift;
                out.R[i] = 0.0;
            }
        }
        out.flat[i] = out.R[i] > 0.0 ? 1 : 0;
    }
    // each step is flat or sloped in full (knots guarantee this); emit the exact slope
    for (std::size_t i = 0; i + 1 < m; ++i)
        out.dL[i] = out.flat[i] ? 0.0 : (out.t[i + 1] - out.t[i]) / path.drift;
    return out;
}

DensityEstimate estimate_renewal_density(const SubordinatorSpec& spec, double x, double delta,
                                         int n_paths, std::uint64_t seed) {
    spec.validate();
    if (!(delta > 0.0)) throw SpecError("delta must be > 0");
    if (!(x >= 0.0)) throw SpecError("x must be >= 0");
    if (n_paths < 2) throw SpecError("n_paths must be >= 2");

    const double horizon = (x + delta + 1.0) / spec.effective_drift();
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        auto path = sample_subordinator(spec, horizon, stream_seed(seed, i, StreamTag::Generic));
        double lx = inverse_at_level(path, x).L;
        double lxd = inverse_at_level(path, x + delta).L;
        double v = (lxd - lx) / delta;
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / n_paths;
    double var = std::max(0.0, (sumsq - n_paths * mean * mean) / (n_paths - 1));
    return {mean, std::sqrt(var / n_paths)};
}

double hit_probability(const SubordinatorSpec& spec, double x, int n_paths, std::uint64_t seed) {
    spec.validate();
    if (!(x > 0.0)) throw SpecError("x must be > 0");
    if (n_paths < 1) throw SpecError("n_paths must be >= 1");
    if (std::holds_alternative<TruncatedStable>(spec.jump_law))
        throw SpecError("hit_probability: truncated-stable law unsupported (exact hits ill-posed)");

    const double horizon = (x + 1.0) / spec.effective_drift();
    long hits = 0;
    for (int i = 0; i < n_paths; ++i) {
        auto path = sample_subordinator(spec, horizon, stream_seed(seed, i, StreamTag::Generic));
        if (inverse_at_level(path, x).R == 0.0) ++hits;
    }
    return static_cast<double>(hits) / n_paths;
}

} // namespace subdiff
