#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <string_view>

namespace frspec::prof {

enum class Component : int {
    embedding = 0,
    transformer_layer,
    lm_head,
    softmax,       // vocabulary softmax only; attention-internal softmax counts as transformer_layer
    tree_ops,
    other,
    count_,
};

inline constexpr int kNumComponents = static_cast<int>(Component::count_);

std::string_view component_name(Component c);

// Accumulates wall time per component on the thread it is activated on.
// Scopes are no-ops while no collector is active, so instrumented code paths
// produce identical results with profiling on or off.
class Collector {
  public:
    void reset() { ns_.fill(0); }
    std::int64_t nanos(Component c) const { return ns_[static_cast<int>(c)]; }
    void add(Component c, std::int64_t ns) { ns_[static_cast<int>(c)] += ns; }
    std::int64_t instrumented_total() const;

    static Collector * active();

    // RAII activation for the current thread.
    class Activation {
      public:
        explicit Activation(Collector & c);
        ~Activation();
        Activation(const Activation &) = delete;
        Activation & operator=(const Activation &) = delete;

      private:
        Collector * prev_;
    };

  private:
    std::array<std::int64_t, kNumComponents> ns_{};
};

// Times one component; scopes must not nest.
class Scope {
  public:
    explicit Scope(Component c);
    ~Scope();
    Scope(const Scope &) = delete;
    Scope & operator=(const Scope &) = delete;

  private:
    Component c_;
    std::chrono::steady_clock::time_point t0_;
    bool armed_;
};

}  // namespace frspec::prof
