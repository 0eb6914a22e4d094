#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cropstress::core {

// --- hashing ---------------------------------------------------------------

// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// --- number formatting -----------------------------------------------------

// Shortest round-trip decimal form of a double (std::to_chars). Stable across
// platforms, unlike ostream defaults.
std::string format_double(double v);

// Parse a double, rejecting trailing garbage. Throws Error(data) on failure.
double parse_double(const std::string& s);
std::int64_t parse_int(const std::string& s);

// --- strings ---------------------------------------------------------------

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);
bool starts_with(const std::string& s, const std::string& prefix);

// --- file I/O --------------------------------------------------------------

// Read a whole file as bytes/string. Throws Error(io) if unreadable.
std::string slurp(const std::filesystem::path& path);

// Write bytes atomically-ish (temp file + rename). Throws Error(io).
void spit(const std::filesystem::path& path, const std::string& contents);

// --- little-endian binary helpers -----------------------------------------

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

// Readers advance `pos`; they throw Error(data) on truncation.
std::uint32_t get_u32(const std::string& in, std::size_t& pos);
std::uint64_t get_u64(const std::string& in, std::size_t& pos);
float get_f32(const std::string& in, std::size_t& pos);
double get_f64(const std::string& in, std::size_t& pos);

// --- numerics --------------------------------------------------------------

// Standard normal CDF.
double normal_cdf(double x);

double mean(const std::vector<double>& v);
// Population variance (1/N).
double variance_population(const std::vector<double>& v);

}  // namespace cropstress::core
