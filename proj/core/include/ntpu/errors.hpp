#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ntpu {

// Base for everything thrown by this library. The CLI maps subclasses to
// process exit codes, so new error sites should pick the closest subclass.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed instruction fields at encode time (field out of declared range).
class EncodeError : public Error {
public:
    using Error::Error;
};

// Malformed 16-byte words: unknown opcode, nonzero padding, bad field values.
class DecodeError : public Error {
public:
    using Error::Error;
};

// Assembly text problems. Carries the 1-based source line.
class AsmError : public Error {
public:
    AsmError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Bad AcceleratorConfig values (presets are always valid; files may not be).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Datapath-level violations: index out of range, FIFO misuse, bad transfer.
class MachineError : public Error {
public:
    using Error::Error;
};

// Network description file problems. Carries the 1-based source line.
class NetParseError : public Error {
public:
    NetParseError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// A network that parses but cannot be realized: shape underflow, working set
// that fits no legal tiling, DRAM overflow. The message names the layer and
// the numbers behind the failure.
class CapacityError : public Error {
public:
    using Error::Error;
};

// File I/O and container-format failures (magic/version/size mismatches).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace ntpu
