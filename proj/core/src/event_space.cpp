#include "bnmarket/event_space.hpp"

#include <bit>
#include <set>
#include <stdexcept>

#include "bnmarket/errors.hpp"

namespace bnm {

namespace {

bool valid_label(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c == '&' || c == '|' || c == '!' || c == '=' || c == '*' ||
            c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            return false;
        }
    }
    return true;
}

}  // namespace

EventSpace::EventSpace(int num_events) {
    if (num_events < 1 || num_events > kMaxEvents) {
        throw std::invalid_argument("EventSpace: event count " + std::to_string(num_events) +
                                    " outside [1, " + std::to_string(kMaxEvents) + "]");
    }
    labels_.reserve(num_events);
    for (int j = 1; j <= num_events; ++j) labels_.push_back("A" + std::to_string(j));
}

EventSpace::EventSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
    const int m = static_cast<int>(labels_.size());
    if (m < 1 || m > kMaxEvents) {
        throw std::invalid_argument("EventSpace: event count " + std::to_string(m) +
                                    " outside [1, " + std::to_string(kMaxEvents) + "]");
    }
    std::set<std::string> seen;
    for (const auto& l : labels_) {
        if (!valid_label(l)) throw std::invalid_argument("EventSpace: bad label '" + l + "'");
        if (!seen.insert(l).second) {
            throw std::invalid_argument("EventSpace: duplicate label '" + l + "'");
        }
    }
}

int EventSpace::find(const std::string& label) const {
    for (int j = 0; j < size(); ++j) {
        if (labels_[j] == label) return j;
    }
    return -1;
}

int EventExpr::arity() const { return std::popcount(mask); }

EventExpr EventExpr::with_literal(int event, bool outcome) const {
    if (constrains(event)) {
        throw std::invalid_argument("EventExpr: event index " + std::to_string(event) +
                                    " already constrained");
    }
    return conjoin(literal(event, outcome));
}

std::string to_string(const EventExpr& e, const EventSpace& space) {
    if (e.is_sure()) return "*";
    std::string out;
    for (int j = 0; j < space.size(); ++j) {
        if (!e.constrains(j)) continue;
        if (!out.empty()) out += '&';
        if (!((e.value >> j) & 1u)) out += '!';
        out += space.label(j);
    }
    return out;
}

EventExpr parse_event_expr(const std::string& text, const EventSpace& space) {
    EventExpr e;
    if (text.empty() || text == "*") return e;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t amp = text.find('&', pos);
        std::string tok = text.substr(pos, amp == std::string::npos ? amp : amp - pos);
        bool outcome = true;
        if (!tok.empty() && tok.front() == '!') {
            outcome = false;
            tok.erase(tok.begin());
        }
        int j = space.find(tok);
        if (j < 0) throw ParseError("unknown event '" + tok + "' in expression '" + text + "'");
        if (e.constrains(j)) {
            throw ParseError("event '" + tok + "' appears twice in expression '" + text + "'");
        }
        e = e.with_literal(j, outcome);
        if (amp == std::string::npos) break;
        pos = amp + 1;
    }
    return e;
}

std::vector<EventExpr> all_assignments(std::uint32_t mask) {
    const int q = std::popcount(mask);
    std::vector<EventExpr> out;
    out.reserve(1u << q);
    for (std::uint32_t packed = 0; packed < (1u << q); ++packed) {
        out.push_back(EventExpr::assignment(mask, spread_bits(packed, mask)));
    }
    return out;
}

std::uint32_t pack_bits(WorldState state, std::uint32_t mask) {
    std::uint32_t packed = 0;
    int out_bit = 0;
    for (std::uint32_t m = mask; m != 0; m &= m - 1, ++out_bit) {
        const std::uint32_t lowest = m & ~(m - 1);
        if (state & lowest) packed |= 1u << out_bit;
    }
    return packed;
}

std::uint32_t spread_bits(std::uint32_t packed, std::uint32_t mask) {
    std::uint32_t state = 0;
    int in_bit = 0;
    for (std::uint32_t m = mask; m != 0; m &= m - 1, ++in_bit) {
        const std::uint32_t lowest = m & ~(m - 1);
        if ((packed >> in_bit) & 1u) state |= lowest;
    }
    return state;
}

}  // namespace bnm
