#include "thinprice/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace thinprice::log {

namespace {

Level g_threshold = Level::warn;
std::mutex g_mutex;

const char* label(Level level) {
    switch (level) {
        case Level::error: return "error";
        case Level::warn: return "warn";
        case Level::info: return "info";
        case Level::debug: return "debug";
    }
    return "?";
}

}  // namespace

Level threshold() { return g_threshold; }

void set_threshold(Level level) { g_threshold = level; }

void init_from_env() {
    const char* raw = std::getenv("THINPRICE_LOG");
    if (raw == nullptr) return;
    std::string_view v(raw);
    if (v == "error" || v == "0") g_threshold = Level::error;
    else if (v == "warn" || v == "1") g_threshold = Level::warn;
    else if (v == "info" || v == "2") g_threshold = Level::info;
    else if (v == "debug" || v == "3") g_threshold = Level::debug;
    else std::cerr << "[thinprice] warn: ignoring unknown THINPRICE_LOG value '" << v << "'\n";
}

void write(Level level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(g_threshold)) return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << "[thinprice] " << label(level) << ": " << msg << '\n';
}

}  // namespace thinprice::log
