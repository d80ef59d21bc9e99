#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bnm {

#ifndef BNMARKET_MAX_EVENTS
#define BNMARKET_MAX_EVENTS 20
#endif

// Hard cap on the number of primary events: joint tables have 2^M entries.
inline constexpr int kMaxEvents = BNMARKET_MAX_EVENTS;

// A full assignment of all M binary events, encoded as an integer in
// [0, 2^M): event j (zero-based) is true iff bit j is set.
using WorldState = std::uint32_t;

// The set of M named binary events underlying the state space.
//
// Everything downstream (joints, nets, markets) shares one of these; all
// event indices are zero-based positions into labels().
class EventSpace {
  public:
    // Events named A1..AM.
    explicit EventSpace(int num_events);
    // One label per event; labels must be unique, nonempty, and free of the
    // characters used by the security string grammar ("&|!=", whitespace).
    explicit EventSpace(std::vector<std::string> labels);

    int size() const { return static_cast<int>(labels_.size()); }
    std::uint32_t num_states() const { return 1u << labels_.size(); }
    const std::string& label(int event) const { return labels_.at(event); }
    const std::vector<std::string>& labels() const { return labels_; }

    // Index of the event with the given label, or -1.
    int find(const std::string& label) const;

    bool operator==(const EventSpace& other) const { return labels_ == other.labels_; }

  private:
    std::vector<std::string> labels_;
};

// A conjunction of event literals; the empty conjunction is the sure event.
//
// Encoded as a pair of bitmasks over events: `mask` marks the constrained
// events, `value` (a subset of mask) their required outcomes.
struct EventExpr {
    std::uint32_t mask = 0;
    std::uint32_t value = 0;

    static EventExpr sure() { return {}; }
    static EventExpr literal(int event, bool outcome) {
        EventExpr e;
        e.mask = 1u << event;
        e.value = outcome ? e.mask : 0u;
        return e;
    }
    // Conjunction of full assignments of `events` drawn from state bits.
    static EventExpr assignment(std::uint32_t events_mask, std::uint32_t state_bits) {
        return {events_mask, state_bits & events_mask};
    }

    bool is_sure() const { return mask == 0; }
    int arity() const;
    bool constrains(int event) const { return (mask >> event) & 1u; }
    bool satisfied_by(WorldState state) const { return (state & mask) == value; }

    // True when this and other require conflicting outcomes for some event
    // (their conjunction is the empty event).
    bool contradicts(const EventExpr& other) const {
        return ((value ^ other.value) & (mask & other.mask)) != 0;
    }
    // Conjunction; caller checks contradicts() first if the distinction matters.
    EventExpr conjoin(const EventExpr& other) const {
        return {mask | other.mask, value | other.value};
    }

    // Add one literal; the event must not already be constrained.
    EventExpr with_literal(int event, bool outcome) const;

    bool operator==(const EventExpr& other) const = default;
};

// Formats as the scenario grammar: literals joined by '&', '!' for negation,
// events in ascending index order; the sure event renders as "*".
std::string to_string(const EventExpr& e, const EventSpace& space);

// Parses the grammar above ("A1&!A3", "*" or "" for the sure event).
EventExpr parse_event_expr(const std::string& text, const EventSpace& space);

// Enumeration helper: visits every assignment of the events in `mask` as an
// EventExpr, in ascending order of the packed assignment bits (lowest event
// index least significant).
std::vector<EventExpr> all_assignments(std::uint32_t mask);

// Packs the bits of `state` at the positions in `mask` into a dense row
// index, lowest masked event least significant.  Inverse of spread_bits.
std::uint32_t pack_bits(WorldState state, std::uint32_t mask);
std::uint32_t spread_bits(std::uint32_t packed, std::uint32_t mask);

}  // namespace bnm
