#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "memento/errors.hpp"

namespace memento {

enum class ProblemKind : uint8_t { Tsp = 0, Cvrp = 1 };

std::string kind_name(ProblemKind kind);
ProblemKind kind_from_name(const std::string& name);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double euclid(const Point& a, const Point& b) {
    double dx = a.x - b.x;
    double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// One routing problem. Coordinates live in the unit square. For CVRP, index 0
// is the depot (demand 0) and every customer demand is in (0, capacity].
struct Instance {
    ProblemKind kind = ProblemKind::Tsp;
    uint64_t id = 0;
    std::vector<Point> coords;
    std::vector<uint32_t> demands;  // CVRP only; empty for TSP
    uint32_t capacity = 0;          // CVRP only; 0 for TSP

    int size() const { return static_cast<int>(coords.size()); }
    // Customers exclude the depot for CVRP; for TSP every node is a customer.
    int num_customers() const {
        return kind == ProblemKind::Cvrp ? size() - 1 : size();
    }
    void validate() const;
};

struct Dataset {
    ProblemKind kind = ProblemKind::Tsp;
    int n = 0;
    uint64_t seed = 0;
    std::vector<Instance> instances;

    int count() const { return static_cast<int>(instances.size()); }
};

class RngStream;

// One fresh instance drawn from the generator's distribution: coordinates
// i.i.d. uniform on the unit square; CVRP demands uniform in {1..9} with
// capacity 30.
Instance random_instance(ProblemKind kind, int n, uint64_t id, RngStream& rng);

// Deterministic function of its arguments; instance i uses its own derived
// stream, so regeneration is byte-identical regardless of thread count.
Dataset generate_dataset(ProblemKind kind, int n, int count, uint64_t seed, int num_threads = 1);

// Closed-tour Euclidean length. `tour` must be a permutation of 0..n-1.
double tour_cost(const Instance& instance, const std::vector<int>& tour);

// Total length of a depot-delimited CVRP visit sequence, e.g. {0,3,1,0,2,0}.
// The sequence must start and end at the depot, visit every customer exactly
// once, contain no empty route, and respect capacity on every route.
double routes_cost(const Instance& instance, const std::vector<int>& routes);

struct BruteForceResult {
    double cost = 0.0;
    // TSP: a tour (permutation). CVRP: a depot-delimited sequence.
    std::vector<int> solution;
};

// Exhaustive search. Caps: TSP n <= 10, CVRP <= 8 customers; anything larger
// is refused.
BruteForceResult brute_force(const Instance& instance);

// Cost of a solution in the representation brute_force/rollouts use:
// TSP tour for TSP, depot-delimited sequence for CVRP.
double solution_cost(const Instance& instance, const std::vector<int>& solution);

// Orientation-normalized form: TSP tours rotate node 0 first and fix the
// direction; CVRP routes are direction-normalized and sorted. Two solutions
// describe the same tour/route set iff their canonical forms are equal, so
// canonical costs of equal solutions are bitwise identical (summation order
// is pinned down).
std::vector<int> canonical_solution(const Instance& instance, const std::vector<int>& solution);
double canonical_cost(const Instance& instance, const std::vector<int>& solution);

}  // namespace memento
