#pragma once

#include <cstdint>
#include <string>

#include "memento/linalg.hpp"
#include "memento/memory.hpp"
#include "memento/policy.hpp"

namespace memento {

// Everything needed to resume or evaluate a run: the policy architecture and
// weights, optionally the memory net, and the provenance of how they were
// produced. save/load round-trips every weight bit for bit.
struct Checkpoint {
    PolicyConfig policy;
    TensorMap params;
    bool has_memory_net = false;
    MemoryNetConfig net_config;
    TensorMap net_params;
    uint64_t seed = 0;
    std::string provenance;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Rejects wrong magic, unsupported format versions, and files whose content
// hash does not match (any corrupted byte trips it).
Checkpoint load_checkpoint(const std::string& path);

// Additionally rejects a checkpoint whose stored architecture differs from
// the expected one.
Checkpoint load_checkpoint(const std::string& path, const PolicyConfig& expected);

// Rebuilds a usable memory net from a checkpoint that carries one.
MemoryNet checkpoint_net(const Checkpoint& ckpt);

// FNV-1a. Stable across platforms; used for provenance stamps and stage
// completion markers.
uint64_t content_hash64(const std::string& text);

}  // namespace memento
