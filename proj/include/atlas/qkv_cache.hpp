#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "atlas/counters.hpp"
#include "atlas/tensor.hpp"

namespace atlas {

enum class CacheRole : std::uint8_t { Q = 0, K = 1, V = 2 };

const char* cache_role_name(CacheRole role);

// One recorded cache interaction. Fill/Hit events identify the projection and
// which scale asked for it; Invalidate events carry only the scale whose maps
// changed plus the revision after the bump.
struct CacheEvent {
    enum Kind : std::uint8_t { Hit = 0, Fill = 1, Invalidate = 2 };
    Kind kind = Hit;
    std::size_t scale = 0;   // scale of the cached tensor
    std::size_t batch = 0;   // batch element (Fill/Hit only)
    std::size_t window = 0;  // row-major window index at `scale` (Fill/Hit only)
    CacheRole role = CacheRole::Q;
    std::string owner;          // parameter set that produced the projection
    std::size_t reader = 0;     // scale that requested the value (Fill/Hit only)
    std::uint64_t revision = 0;
};

// Per-window Q/K/V projection cache with per-scale revision stamps. A stored
// value stays valid until invalidate_scale() is called for the scale it was
// projected from; every lookup, fill, and invalidation lands in the event log
// so tests can assert on projection counts and invalidation sites.
class QkvCache {
  public:
    // Returns the cached value, projecting via `project` on a miss. `owner`
    // names the parameter set (norm + weights) the projection belongs to;
    // values from different owners never alias. `reader` is the scale asking.
    const Matrix& get_or_project(std::size_t scale, std::size_t batch, std::size_t window,
                                 CacheRole role, const std::string& owner, std::size_t reader,
                                 const std::function<Matrix()>& project,
                                 OpCounter* counter = nullptr);

    // Drops every entry projected from `scale` and bumps its revision.
    void invalidate_scale(std::size_t scale);

    // Entry point of a block forward: drops all entries (reuse across blocks
    // would serve features from before the previous block's updates). Emits no
    // event; the log records in-block activity only.
    void begin_block() { entries_.clear(); }

    // With bypass on, every lookup projects fresh (and logs a fill). The
    // result must be bitwise identical to the cached path; tests lean on that.
    void set_bypass(bool on) { bypass_ = on; }

    void clear();  // entries and events; revisions keep counting
    std::uint64_t revision(std::size_t scale) const;

    const std::vector<CacheEvent>& events() const { return events_; }
    void reset_events() { events_.clear(); }

    std::uint64_t hits() const { return hits_; }
    std::uint64_t fills() const { return fills_; }

  private:
    using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::uint8_t, std::string>;
    struct Entry {
        Matrix value;
        std::uint64_t revision = 0;
    };

    std::map<Key, Entry> entries_;
    std::map<std::size_t, std::uint64_t> revisions_;
    std::vector<CacheEvent> events_;
    std::uint64_t hits_ = 0, fills_ = 0;
    bool bypass_ = false;
};

}  // namespace atlas
