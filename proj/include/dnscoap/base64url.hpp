#pragma once

#include <string>
#include <string_view>

#include "dnscoap/bytes.hpp"

namespace dnscoap {

// Unpadded base64url (RFC 4648 §5). 3n octets map to 4n characters,
// 3n+1 to 4n+2, 3n+2 to 4n+3; '=' never appears.
std::string base64url_encode(const Bytes& data);

// Rejects padding, non-alphabet characters, and impossible lengths (4n+1).
Bytes base64url_decode(std::string_view text);

}  // namespace dnscoap
