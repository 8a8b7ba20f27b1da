#include "atlas/qkv_cache.hpp"

#include "atlas/errors.hpp"

namespace atlas {

const char* cache_role_name(CacheRole role) {
    switch (role) {
        case CacheRole::Q: return "q";
        case CacheRole::K: return "k";
        case CacheRole::V: return "v";
    }
    return "?";
}

const Matrix& QkvCache::get_or_project(std::size_t scale, std::size_t batch, std::size_t window,
                                       CacheRole role, const std::string& owner,
                                       std::size_t reader,
                                       const std::function<Matrix()>& project,
                                       OpCounter* counter) {
    const Key key{scale, batch, window, static_cast<std::uint8_t>(role), owner};
    const std::uint64_t rev = revision(scale);

    auto it = bypass_ ? entries_.end() : entries_.find(key);
    if (it != entries_.end() && it->second.revision == rev) {
        ++hits_;
        if (counter) ++counter->cache_hits;
        events_.push_back({CacheEvent::Hit, scale, batch, window, role, owner, reader, rev});
        return it->second.value;
    }

    Matrix value = project();
    internal_check(revision(scale) == rev,
                   "qkv cache: projection invalidated the scale it projects from");
    ++fills_;
    if (counter) ++counter->cache_misses;
    events_.push_back({CacheEvent::Fill, scale, batch, window, role, owner, reader, rev});
    Entry& e = entries_[key];
    e.value = std::move(value);
    e.revision = rev;
    return e.value;
}

void QkvCache::invalidate_scale(std::size_t scale) {
    const std::uint64_t rev = ++revisions_[scale];
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (std::get<0>(it->first) == scale)
            it = entries_.erase(it);
        else
            ++it;
    }
    events_.push_back(
        {CacheEvent::Invalidate, scale, 0, 0, CacheRole::Q, std::string(), 0, rev});
}

void QkvCache::clear() {
    entries_.clear();
    events_.clear();
    hits_ = fills_ = 0;
}

std::uint64_t QkvCache::revision(std::size_t scale) const {
    auto it = revisions_.find(scale);
    return it == revisions_.end() ? 0 : it->second;
}

}  // namespace atlas
