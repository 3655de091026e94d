#pragma once

#include <deque>
#include <optional>

#include "srpc/names.hpp"
#include "srpc/program.hpp"

namespace srpc {

struct QueueMessage {
    ClientRef peer; // sender (input queue) or recipient (output queue)
    Tag tag;
    PayloadPtr payload; // null for responses
};

inline bool same_key(const QueueMessage& m, ClientRef peer, Tag tag) {
    return m.peer == peer && m.tag == tag;
}

// FIFO queue with selective removal: push appends at the back, take removes
// the oldest message matching (peer, tag) and keeps the relative order of
// everything else.
class SelectiveQueue {
  public:
    void push(QueueMessage m) { items_.push_back(std::move(m)); }

    std::optional<QueueMessage> take(ClientRef peer, Tag tag) {
        for (auto it = items_.begin(); it != items_.end(); ++it) {
            if (same_key(*it, peer, tag)) {
                QueueMessage m = std::move(*it);
                items_.erase(it);
                return m;
            }
        }
        return std::nullopt;
    }

    bool has(ClientRef peer, Tag tag) const {
        for (const auto& m : items_)
            if (same_key(m, peer, tag)) return true;
        return false;
    }

    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }
    const QueueMessage& at(std::size_t i) const { return items_[i]; }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

  private:
    std::deque<QueueMessage> items_;
};

} // namespace srpc
