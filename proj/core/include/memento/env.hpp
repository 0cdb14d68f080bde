#pragma once

#include <utility>
#include <vector>

#include "memento/instance.hpp"

namespace memento {

// Construction state. Value type: stepping is pure apart from the in-place
// fast path, and states never outlive the instance they point at.
struct State {
    const Instance* instance = nullptr;
    std::vector<char> visited;
    int position = 0;
    int start_point = 0;
    int step_count = 0;
    uint64_t remaining_capacity = 0;  // CVRP only
    std::vector<int> route_log;
    // Sum of edge lengths traversed so far (excludes the TSP closing edge).
    double cost_acc = 0.0;
};

// TSP: start_point is the first node, already visited after reset.
// CVRP: the vehicle starts at the depot and start_point names the customer
// the first move is forced to (the step-0 mask is a one-hot), which is how
// multi-start diversification reaches a depot-rooted problem.
State reset(const Instance& instance, int start_point);

bool is_terminal(const State& s);

// Feasible actions. TSP: unvisited nodes. CVRP: unvisited customers whose
// demand fits the remaining capacity, plus the depot unless the vehicle is
// already there; at least one entry is always true.
std::vector<char> action_mask(const State& s);
// Allocation-free variant for rollout loops.
void action_mask_into(const State& s, std::vector<char>& mask);

// Transition. Taking a masked action is a contract violation, never silently
// corrected.
std::pair<State, bool> step(const State& s, int action);
void step_inplace(State& s, int action);

// Total solution cost of a terminal state (adds the TSP closing edge).
double terminal_cost(const State& s);

// Full visit sequence in the representation solution_cost expects:
// TSP tour starting at start_point, or depot-delimited CVRP routes.
std::vector<int> solution_of(const State& s);

struct Trajectory {
    uint64_t instance_id = 0;
    int start_point = 0;
    std::vector<int> actions;
    std::vector<double> action_logps;
    // Correction logit of each taken action; all zero when no memory is
    // attached to the rollout.
    std::vector<double> memory_logits_taken;
    double ret = 0.0;  // negative solution cost
    int attempt_index = 0;

    std::vector<int> solution(ProblemKind kind) const;
    double total_logp() const;
};

// Node the agent was positioned at when it took actions[t].
int node_at_step(const Trajectory& t, ProblemKind kind, int step);

}  // namespace memento
