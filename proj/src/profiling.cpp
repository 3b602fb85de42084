#include "frspec/profiling.h"

#include <cassert>

namespace frspec::prof {

namespace {
thread_local Collector * g_active = nullptr;
thread_local bool g_in_scope = false;
}  // namespace

std::string_view component_name(Component c) {
    switch (c) {
        case Component::embedding:         return "embedding";
        case Component::transformer_layer: return "transformer_layer";
        case Component::lm_head:           return "lm_head";
        case Component::softmax:           return "softmax";
        case Component::tree_ops:          return "tree_ops";
        case Component::other:             return "other";
        default:                           return "?";
    }
}

std::int64_t Collector::instrumented_total() const {
    std::int64_t t = 0;
    for (auto v : ns_) t += v;
    return t;
}

Collector * Collector::active() { return g_active; }

Collector::Activation::Activation(Collector & c) : prev_(g_active) { g_active = &c; }
Collector::Activation::~Activation() { g_active = prev_; }

Scope::Scope(Component c) : c_(c), armed_(g_active != nullptr && !g_in_scope) {
    if (armed_) {
        g_in_scope = true;
        t0_ = std::chrono::steady_clock::now();
    }
}

Scope::~Scope() {
    if (armed_) {
        const auto t1 = std::chrono::steady_clock::now();
        g_active->add(c_, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0_).count());
        g_in_scope = false;
    }
}

}  // namespace frspec::prof
