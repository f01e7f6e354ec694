#include "aircast/log.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>

namespace aircast::log {

namespace {

Level from_env()
{
    const char* env = std::getenv("AIRCAST_LOG");
    if (env == nullptr) {
        return Level::Warn;
    }
    const std::string v(env);
    if (v == "error") {
        return Level::Error;
    }
    if (v == "info") {
        return Level::Info;
    }
    if (v == "debug") {
        return Level::Debug;
    }
    return Level::Warn;
}

struct State {
    Level level = from_env();
    std::unique_ptr<std::ofstream> file;
    std::mutex mu;
};

State& state()
{
    static State s;
    return s;
}

const char* tag(Level l)
{
    switch (l) {
    case Level::Error:
        return "error";
    case Level::Warn:
        return "warn";
    case Level::Info:
        return "info";
    case Level::Debug:
        return "debug";
    }
    return "?";
}

} // namespace

Level threshold()
{
    return state().level;
}

void set_threshold(Level level)
{
    state().level = level;
}

void set_file(const std::filesystem::path& path)
{
    State& s = state();
    std::lock_guard lock(s.mu);
    s.file.reset();
    if (!path.empty()) {
        s.file = std::make_unique<std::ofstream>(path, std::ios::app);
    }
}

void write(Level level, std::string_view message)
{
    State& s = state();
    std::lock_guard lock(s.mu);
    if (s.file && *s.file) {
        *s.file << '[' << tag(level) << "] " << message << '\n';
        s.file->flush();
    }
    if (static_cast<int>(level) <= static_cast<int>(s.level)) {
        std::cerr << "[aircast " << tag(level) << "] " << message << '\n';
    }
}

} // namespace aircast::log
