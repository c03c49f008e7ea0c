#include "flattenet/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace flattenet {

int max_threads() {
    static const int cap = [] {
        int n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        if (const char* env = std::getenv("FLATTENET_THREADS")) {
            int limit = std::atoi(env);
            if (limit > 0) n = std::min(n, limit);
        }
        return n;
    }();
    return cap;
}

void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (count <= 0) return;
    const int workers = static_cast<int>(std::min<std::int64_t>(max_threads(), count));
    if (workers <= 1) {
        body(0, count);
        return;
    }
    const std::int64_t chunk = (count + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const std::int64_t begin = t * chunk;
        const std::int64_t end = std::min<std::int64_t>(begin + chunk, count);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& th : pool) th.join();
}

} // namespace flattenet
