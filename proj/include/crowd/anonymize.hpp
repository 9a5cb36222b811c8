#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowd/model.hpp"
#include "crowd/time.hpp"

namespace crowd {

struct SaltConfig {
    std::vector<unsigned char> salt;
    // When set, the effective key changes every period (aligned to the Unix epoch).
    std::optional<std::chrono::seconds> rotation_period;
};

/// Throws std::invalid_argument if the salt is shorter than 16 bytes or the
/// rotation period is not a whole multiple of the window duration.
void validate(const SaltConfig& salt, std::chrono::seconds window_duration);

/// Builds a salt from a hex string (the SALT environment variable form).
SaltConfig salt_from_hex(std::string_view hex);

/// A fresh salt from the system CSPRNG.
SaltConfig random_salt(std::size_t bytes = 32);

/// True for six colon-separated hex octets, case-insensitive.
bool is_mac_address(std::string_view text);

/// Keyed hash (HMAC-SHA256) of the canonical uppercase MAC under the salt of
/// the epoch containing `at`. Throws std::invalid_argument on a malformed MAC.
DeviceId anonymize(std::string_view mac, const SaltConfig& salt, Instant at);

/// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view data);

std::string to_hex(const unsigned char* data, std::size_t size);

}  // namespace crowd
