#include "crowd/anonymize.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cctype>
#include <stdexcept>

namespace crowd {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string to_hex(const unsigned char* data, std::size_t size) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0x0f]);
    }
    return out;
}

void validate(const SaltConfig& salt, std::chrono::seconds window_duration) {
    if (salt.salt.size() < 16) {
        throw std::invalid_argument("salt must be at least 16 bytes");
    }
    if (salt.rotation_period) {
        const auto period = salt.rotation_period->count();
        if (period <= 0 || window_duration.count() <= 0 || period % window_duration.count() != 0) {
            throw std::invalid_argument("salt rotation period must be a multiple of the window duration");
        }
    }
}

SaltConfig salt_from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw std::invalid_argument("salt hex has odd length");
    SaltConfig config;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = hex_value(hex[i]);
        const int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("salt is not hex");
        config.salt.push_back(static_cast<unsigned char>(hi * 16 + lo));
    }
    return config;
}

SaltConfig random_salt(std::size_t bytes) {
    SaltConfig config;
    config.salt.resize(bytes);
    if (RAND_bytes(config.salt.data(), static_cast<int>(bytes)) != 1) {
        throw std::runtime_error("cannot draw a random salt");
    }
    return config;
}

bool is_mac_address(std::string_view text) {
    if (text.size() != 17) return false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i % 3 == 2) {
            if (text[i] != ':') return false;
        } else if (hex_value(text[i]) < 0) {
            return false;
        }
    }
    return true;
}

DeviceId anonymize(std::string_view mac, const SaltConfig& salt, Instant at) {
    if (!is_mac_address(mac)) {
        throw std::invalid_argument("malformed MAC address");
    }
    if (salt.salt.empty()) throw std::invalid_argument("empty salt");
    std::string message(mac);
    for (auto& c : message) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (salt.rotation_period) {
        const auto epoch = std::chrono::floor<std::chrono::seconds>(at).time_since_epoch() /
                           *salt.rotation_period;
        message += '#';
        message += std::to_string(epoch);
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    HMAC(EVP_sha256(), salt.salt.data(), static_cast<int>(salt.salt.size()),
         reinterpret_cast<const unsigned char*>(message.data()), message.size(), digest, &length);
    return DeviceId(to_hex(digest, length));
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    return to_hex(digest, sizeof digest);
}

}  // namespace crowd
