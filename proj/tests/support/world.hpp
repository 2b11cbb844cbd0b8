#pragma once

// Shared fixture wiring for tests that need the seeded knowledge store or
// the full engine.

#include "oracles.hpp"

#include "triage/engine.hpp"
#include "triage/kb.hpp"

#include <memory>

namespace support {

inline std::unique_ptr<triage::kb::KnowledgeStore> seeded_store() {
    auto store = std::make_unique<triage::kb::KnowledgeStore>();
    for (auto kind : triage::kb::kAllCollections) {
        store->ingest_collection(oracle::data_dir() / "kb" / (std::string(triage::kb::to_string(kind)) + ".jsonl"),
                                 kind);
    }
    return store;
}

inline std::unique_ptr<triage::engine::FixtureWorld> world() {
    return triage::engine::FixtureWorld::load(oracle::data_dir(), oracle::fixture_dir());
}

}  // namespace support
