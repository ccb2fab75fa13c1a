#include "negtome/parallel.hpp"

#include <cstdlib>
#include <string>

namespace negtome {

int64_t worker_count() {
    const char* env = std::getenv("NEGTOME_THREADS");
    int64_t n = 0;
    if (env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 0) n = v;
    }
    if (n == 0) {
        n = static_cast<int64_t>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
    }
    return n;
}

} // namespace negtome
