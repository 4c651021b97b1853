#include "relay/core/digest.hpp"

#include <openssl/evp.h>

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"

namespace relay::core {

bool ContentDigest::well_formed() const {
    return algorithm == kDigestAlgorithm && value.size() == 64 && is_lower_hex(value);
}

Sha256::Sha256() {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("failed to initialize SHA-256 context");
    }
    ctx_ = ctx;
}

Sha256::~Sha256() {
    EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Sha256::update(const void* data, std::size_t len) {
    if (len == 0) return;
    if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, len) != 1) {
        throw Error("SHA-256 update failed");
    }
}

ContentDigest Sha256::finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    auto* ctx = static_cast<EVP_MD_CTX*>(ctx_);
    if (EVP_DigestFinal_ex(ctx, md, &md_len) != 1) {
        throw Error("SHA-256 finalize failed");
    }
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    return ContentDigest{kDigestAlgorithm, to_hex({md, md_len})};
}

ContentDigest sha256(const void* data, std::size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.finish();
}

ContentDigest sha256(std::span<const std::byte> data) {
    return sha256(data.data(), data.size());
}

ContentDigest sha256(const std::string& data) {
    return sha256(data.data(), data.size());
}

}  // namespace relay::core
