#include "memento/env.hpp"

#include <numeric>

#include "memento/errors.hpp"

namespace memento {

State reset(const Instance& instance, int start_point) {
    const int n = instance.size();
    State s;
    s.instance = &instance;
    s.visited.assign(n, 0);
    s.start_point = start_point;
    if (instance.kind == ProblemKind::Tsp) {
        if (start_point < 0 || start_point >= n)
            throw ValidationError("reset: start point out of range");
        s.position = start_point;
        s.visited[start_point] = 1;
    } else {
        if (start_point < 1 || start_point >= n)
            throw ValidationError("reset: CVRP start must name a customer");
        s.position = 0;
        s.remaining_capacity = instance.capacity;
    }
    return s;
}

bool is_terminal(const State& s) {
    const Instance& inst = *s.instance;
    if (inst.kind == ProblemKind::Tsp) return s.step_count == inst.size() - 1;
    if (s.step_count == 0) return false;
    for (int v = 1; v < inst.size(); ++v)
        if (!s.visited[v]) return false;
    return s.position == 0;
}

void action_mask_into(const State& s, std::vector<char>& mask) {
    if (is_terminal(s)) throw ContractError("action_mask: terminal state");
    const Instance& inst = *s.instance;
    const int n = inst.size();
    mask.assign(n, 0);
    if (inst.kind == ProblemKind::Tsp) {
        for (int v = 0; v < n; ++v) mask[v] = !s.visited[v];
        return;
    }
    if (s.step_count == 0) {
        mask[s.start_point] = 1;
        return;
    }
    bool any_customer = false;
    for (int v = 1; v < n; ++v) {
        if (!s.visited[v] && inst.demands[v] <= s.remaining_capacity) {
            mask[v] = 1;
            any_customer = true;
        }
    }
    if (s.position != 0) mask[0] = 1;
    if (s.position == 0 && !any_customer)
        throw ContractError("action_mask: no feasible action at depot");
}

std::vector<char> action_mask(const State& s) {
    std::vector<char> mask;
    action_mask_into(s, mask);
    return mask;
}

namespace {

bool action_feasible(const State& s, int action) {
    const Instance& inst = *s.instance;
    if (action < 0 || action >= inst.size()) return false;
    if (inst.kind == ProblemKind::Tsp) return !s.visited[action];
    if (s.step_count == 0) return action == s.start_point;
    if (action == 0) return s.position != 0;
    return !s.visited[action] && inst.demands[action] <= s.remaining_capacity;
}

}  // namespace

void step_inplace(State& s, int action) {
    const Instance& inst = *s.instance;
    if (is_terminal(s)) throw ContractError("step: terminal state");
    if (!action_feasible(s, action)) throw ContractError("step: action is masked");
    s.cost_acc += euclid(inst.coords[s.position], inst.coords[action]);
    if (inst.kind == ProblemKind::Tsp) {
        s.visited[action] = 1;
    } else if (action == 0) {
        s.remaining_capacity = inst.capacity;
    } else {
        s.visited[action] = 1;
        s.remaining_capacity -= inst.demands[action];
    }
    s.position = action;
    s.step_count += 1;
    s.route_log.push_back(action);
}

std::pair<State, bool> step(const State& s, int action) {
    State next = s;
    step_inplace(next, action);
    return {std::move(next), is_terminal(next)};
}

double terminal_cost(const State& s) {
    if (!is_terminal(s)) throw ContractError("terminal_cost: state not terminal");
    const Instance& inst = *s.instance;
    if (inst.kind == ProblemKind::Tsp)
        return s.cost_acc + euclid(inst.coords[s.position], inst.coords[s.start_point]);
    return s.cost_acc;
}

std::vector<int> solution_of(const State& s) {
    std::vector<int> sol;
    sol.reserve(s.route_log.size() + 1);
    sol.push_back(s.instance->kind == ProblemKind::Tsp ? s.start_point : 0);
    sol.insert(sol.end(), s.route_log.begin(), s.route_log.end());
    return sol;
}

std::vector<int> Trajectory::solution(ProblemKind kind) const {
    std::vector<int> sol;
    sol.reserve(actions.size() + 1);
    sol.push_back(kind == ProblemKind::Tsp ? start_point : 0);
    sol.insert(sol.end(), actions.begin(), actions.end());
    return sol;
}

double Trajectory::total_logp() const {
    return std::accumulate(action_logps.begin(), action_logps.end(), 0.0);
}

int node_at_step(const Trajectory& t, ProblemKind kind, int step) {
    if (step == 0) return kind == ProblemKind::Tsp ? t.start_point : 0;
    return t.actions[step - 1];
}

}  // namespace memento
