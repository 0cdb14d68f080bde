#pragma once

#include <string>
#include <vector>

namespace memento {

struct ReproduceOptions {
    std::string out_root;
    int num_threads = 1;
    // Rerun every stage even when its completion marker still matches.
    bool force = false;
};

const std::vector<std::string>& reproduce_experiments();

// Runs the named experiment end to end with pinned seeds and scales,
// including any upstream stages it depends on. A stage whose completion
// marker matches its pinned config and whose outputs exist is reused, so
// reruns are cheap and downstream experiments share the expensive training
// stages. All emitted metrics files are byte-reproducible at any thread
// count; wall-clock readings go to separate log/timing files.
void reproduce(const std::string& experiment, const ReproduceOptions& opts);

}  // namespace memento
