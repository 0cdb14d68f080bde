#include "memento/instance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "memento/rng.hpp"
#include "memento/threads.hpp"

namespace memento {

namespace {

constexpr uint32_t kDemandMax = 9;
constexpr uint32_t kDeskCapacity = 30;

}  // namespace

std::string kind_name(ProblemKind kind) {
    return kind == ProblemKind::Tsp ? "tsp" : "cvrp";
}

ProblemKind kind_from_name(const std::string& name) {
    if (name == "tsp") return ProblemKind::Tsp;
    if (name == "cvrp") return ProblemKind::Cvrp;
    throw ValidationError("unknown problem kind: " + name);
}

void Instance::validate() const {
    if (size() < 2) throw ValidationError("instance needs at least 2 nodes");
    for (const auto& p : coords) {
        if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
            throw ValidationError("coordinate outside the unit square");
    }
    if (kind == ProblemKind::Tsp) {
        if (!demands.empty() || capacity != 0)
            throw ValidationError("TSP instance must not carry demands/capacity");
    } else {
        if (demands.size() != coords.size())
            throw ValidationError("CVRP demands length mismatch");
        if (capacity == 0) throw ValidationError("CVRP capacity must be positive");
        if (demands[0] != 0) throw ValidationError("CVRP depot demand must be 0");
        for (size_t i = 1; i < demands.size(); ++i) {
            if (demands[i] == 0 || demands[i] > capacity)
                throw ValidationError("CVRP demand out of (0, capacity]");
        }
    }
}

Instance random_instance(ProblemKind kind, int n, uint64_t id, RngStream& rng) {
    if (n < 2) throw ValidationError("random_instance: n must be >= 2");
    Instance inst;
    inst.kind = kind;
    inst.id = id;
    inst.coords.resize(n);
    for (auto& p : inst.coords) {
        p.x = rng.uniform();
        p.y = rng.uniform();
    }
    if (kind == ProblemKind::Cvrp) {
        inst.demands.resize(n);
        inst.demands[0] = 0;
        for (int j = 1; j < n; ++j)
            inst.demands[j] = 1 + static_cast<uint32_t>(rng.uniform_int(kDemandMax));
        inst.capacity = kDeskCapacity;
    }
    return inst;
}

Dataset generate_dataset(ProblemKind kind, int n, int count, uint64_t seed, int num_threads) {
    if (n < 2) throw ValidationError("generate_dataset: n must be >= 2");
    if (count < 1) throw ValidationError("generate_dataset: count must be >= 1");

    Dataset ds;
    ds.kind = kind;
    ds.n = n;
    ds.seed = seed;
    ds.instances.resize(count);

    parallel_for(static_cast<size_t>(count), num_threads, [&](size_t i) {
        RngStream rng = RngStream::derive(seed, RngDomain::DataGen, i);
        ds.instances[i] = random_instance(kind, n, mix64(mix64(seed) ^ (i + 1)), rng);
    });
    return ds;
}

double tour_cost(const Instance& instance, const std::vector<int>& tour) {
    const int n = instance.size();
    if (static_cast<int>(tour.size()) != n)
        throw ValidationError("tour_cost: tour length != instance size");
    std::vector<char> seen(n, 0);
    for (int v : tour) {
        if (v < 0 || v >= n) throw ValidationError("tour_cost: node index out of range");
        if (seen[v]) throw ValidationError("tour_cost: node visited twice");
        seen[v] = 1;
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        total += euclid(instance.coords[tour[i]], instance.coords[tour[(i + 1) % n]]);
    return total;
}

double routes_cost(const Instance& instance, const std::vector<int>& routes) {
    if (instance.kind != ProblemKind::Cvrp)
        throw ValidationError("routes_cost: instance is not CVRP");
    const int n = instance.size();
    if (routes.size() < 3 || routes.front() != 0 || routes.back() != 0)
        throw ValidationError("routes_cost: sequence must start and end at the depot");

    std::vector<char> seen(n, 0);
    uint64_t load = 0;
    double total = 0.0;
    for (size_t i = 1; i < routes.size(); ++i) {
        int v = routes[i];
        if (v < 0 || v >= n) throw ValidationError("routes_cost: node index out of range");
        int prev = routes[i - 1];
        if (v == 0) {
            if (prev == 0) throw ValidationError("routes_cost: empty route (consecutive depots)");
            load = 0;
        } else {
            if (seen[v]) throw ValidationError("routes_cost: customer visited twice");
            seen[v] = 1;
            load += instance.demands[v];
            if (load > instance.capacity)
                throw ValidationError("routes_cost: route demand exceeds capacity");
        }
        total += euclid(instance.coords[prev], instance.coords[v]);
    }
    for (int v = 1; v < n; ++v)
        if (!seen[v]) throw ValidationError("routes_cost: customer missing from sequence");
    return total;
}

double solution_cost(const Instance& instance, const std::vector<int>& solution) {
    return instance.kind == ProblemKind::Tsp ? tour_cost(instance, solution)
                                             : routes_cost(instance, solution);
}

std::vector<int> canonical_solution(const Instance& instance, const std::vector<int>& solution) {
    if (instance.kind == ProblemKind::Tsp) {
        const size_t n = solution.size();
        auto zero = std::find(solution.begin(), solution.end(), 0);
        if (zero == solution.end()) throw ValidationError("canonical_solution: tour lacks node 0");
        std::vector<int> out;
        out.reserve(n);
        out.insert(out.end(), zero, solution.end());
        out.insert(out.end(), solution.begin(), zero);
        if (n >= 3 && out[1] > out[n - 1]) std::reverse(out.begin() + 1, out.end());
        return out;
    }
    std::vector<std::vector<int>> routes;
    std::vector<int> cur;
    for (size_t i = 1; i < solution.size(); ++i) {
        if (solution[i] == 0) {
            if (cur.empty()) throw ValidationError("canonical_solution: empty route");
            if (cur.back() < cur.front()) std::reverse(cur.begin(), cur.end());
            routes.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(solution[i]);
        }
    }
    if (!cur.empty() || solution.empty() || solution.front() != 0)
        throw ValidationError("canonical_solution: sequence must start and end at the depot");
    std::sort(routes.begin(), routes.end(),
              [](const std::vector<int>& a, const std::vector<int>& b) {
                  return a.front() < b.front();
              });
    std::vector<int> out;
    out.reserve(solution.size());
    out.push_back(0);
    for (const auto& r : routes) {
        out.insert(out.end(), r.begin(), r.end());
        out.push_back(0);
    }
    return out;
}

double canonical_cost(const Instance& instance, const std::vector<int>& solution) {
    return solution_cost(instance, canonical_solution(instance, solution));
}

namespace {

BruteForceResult brute_force_tsp(const Instance& inst) {
    const int n = inst.size();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    BruteForceResult best;
    best.cost = std::numeric_limits<double>::infinity();
    // Node 0 fixed first: closed tours are rotation-invariant.
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i)
            c += euclid(inst.coords[perm[i]], inst.coords[perm[(i + 1) % n]]);
        if (c < best.cost) {
            best.cost = c;
            best.solution = perm;
        }
    } while (std::next_permutation(perm.begin() + 1, perm.end()));
    return best;
}

// Every CVRP solution is a customer order plus a split into capacity-feasible
// routes. Enumerating all orders and optimally splitting each one covers the
// full solution set.
BruteForceResult brute_force_cvrp(const Instance& inst) {
    const int n = inst.size();
    const int m = n - 1;
    std::vector<int> cust(m);
    std::iota(cust.begin(), cust.end(), 1);

    BruteForceResult best;
    best.cost = std::numeric_limits<double>::infinity();
    std::vector<double> dp(m + 1);
    std::vector<int> from(m + 1);

    std::sort(cust.begin(), cust.end());
    do {
        dp[0] = 0.0;
        for (int i = 1; i <= m; ++i) {
            dp[i] = std::numeric_limits<double>::infinity();
            uint64_t load = 0;
            double path = 0.0;
            // Route covering cust[j..i-1]; walk j downward extending at the front.
            for (int j = i; j-- > 0;) {
                load += inst.demands[cust[j]];
                if (load > inst.capacity) break;
                if (j + 1 < i) path += euclid(inst.coords[cust[j]], inst.coords[cust[j + 1]]);
                double route = euclid(inst.coords[0], inst.coords[cust[j]]) + path +
                               euclid(inst.coords[cust[i - 1]], inst.coords[0]);
                if (dp[j] + route < dp[i]) {
                    dp[i] = dp[j] + route;
                    from[i] = j;
                }
            }
        }
        if (dp[m] < best.cost) {
            best.cost = dp[m];
            best.solution.assign(1, 0);
            std::vector<std::pair<int, int>> segs;
            for (int i = m; i > 0; i = from[i]) segs.emplace_back(from[i], i);
            std::reverse(segs.begin(), segs.end());
            for (auto [j, i] : segs) {
                for (int k = j; k < i; ++k) best.solution.push_back(cust[k]);
                best.solution.push_back(0);
            }
        }
    } while (std::next_permutation(cust.begin(), cust.end()));
    return best;
}

}  // namespace

BruteForceResult brute_force(const Instance& instance) {
    instance.validate();
    BruteForceResult r;
    if (instance.kind == ProblemKind::Tsp) {
        if (instance.size() > 10)
            throw ValidationError("brute_force: TSP capped at n <= 10");
        r = brute_force_tsp(instance);
    } else {
        if (instance.num_customers() > 8)
            throw ValidationError("brute_force: CVRP capped at 8 customers");
        r = brute_force_cvrp(instance);
    }
    // Canonical re-measurement: reference costs of solutions a search also
    // finds compare bitwise equal, so gaps against this oracle cannot go
    // negative by rounding.
    r.solution = canonical_solution(instance, r.solution);
    r.cost = solution_cost(instance, r.solution);
    return r;
}

}  // namespace memento
