#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace srpc {

// Communication tags: queries, responses, and fire-and-forget casts.
// Casts appear only on outgoing messages and network communication labels;
// a delivered cast is rewritten to a query from the anonymous client.
enum class Tag : std::uint8_t { Query = 0, Response = 1, Cast = 2 };

inline char tag_char(Tag t) {
    switch (t) {
        case Tag::Query: return 'Q';
        case Tag::Response: return 'R';
        case Tag::Cast: return 'C';
    }
    return '?';
}

inline std::string tag_str(Tag t) { return t == Tag::Cast ? "CS" : std::string(1, tag_char(t)); }

// Service name, interned as an index into the run's NameTable. The index
// order is the total order used for deterministic enumeration.
class Name {
  public:
    Name() = default;
    explicit constexpr Name(std::uint32_t ix) : ix_(ix) {}
    constexpr std::uint32_t index() const { return ix_; }
    friend constexpr bool operator==(Name a, Name b) { return a.ix_ == b.ix_; }
    friend constexpr bool operator!=(Name a, Name b) { return a.ix_ != b.ix_; }
    friend constexpr bool operator<(Name a, Name b) { return a.ix_ < b.ix_; }
    friend constexpr bool operator<=(Name a, Name b) { return a.ix_ <= b.ix_; }
    friend constexpr bool operator>(Name a, Name b) { return a.ix_ > b.ix_; }

  private:
    std::uint32_t ix_ = 0;
};

// Either a service name or the anonymous client (rendered "_").
// Anonymous never appears as a message recipient.
class ClientRef {
  public:
    constexpr ClientRef() : v_(kAnon) {}
    constexpr ClientRef(Name n) : v_(static_cast<std::int64_t>(n.index())) {}
    static constexpr ClientRef anon() { return ClientRef(); }
    constexpr bool is_anon() const { return v_ == kAnon; }
    constexpr bool is_name() const { return v_ != kAnon; }
    constexpr Name name() const { return Name(static_cast<std::uint32_t>(v_)); }
    friend constexpr bool operator==(ClientRef a, ClientRef b) { return a.v_ == b.v_; }
    friend constexpr bool operator!=(ClientRef a, ClientRef b) { return a.v_ != b.v_; }
    // Anonymous sorts before every name.
    friend constexpr bool operator<(ClientRef a, ClientRef b) { return a.v_ < b.v_; }

  private:
    static constexpr std::int64_t kAnon = -1;
    std::int64_t v_;
};

// Maps interned names to their labels. Shared read-only across all values of
// one run.
class NameTable {
  public:
    Name intern(std::string_view label) {
        auto it = index_.find(std::string(label));
        if (it != index_.end()) return Name(it->second);
        auto ix = static_cast<std::uint32_t>(labels_.size());
        labels_.emplace_back(label);
        index_.emplace(labels_.back(), ix);
        return Name(ix);
    }

    bool contains(std::string_view label) const { return index_.count(std::string(label)) > 0; }

    Name lookup(std::string_view label) const {
        auto it = index_.find(std::string(label));
        if (it == index_.end()) throw std::out_of_range("unknown name: " + std::string(label));
        return Name(it->second);
    }

    const std::string& label(Name n) const { return labels_.at(n.index()); }
    std::string label(ClientRef c) const { return c.is_anon() ? "_" : label(c.name()); }
    std::size_t size() const { return labels_.size(); }

  private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

using NameTablePtr = std::shared_ptr<const NameTable>;

} // namespace srpc
