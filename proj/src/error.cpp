#include "score/error.hpp"

namespace score {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::contract: return "contract";
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::io: return "io";
        case ErrorKind::transport: return "transport";
        case ErrorKind::cache_miss: return "cache_miss";
        case ErrorKind::model_reply: return "model_reply";
    }
    return "unknown";
}

}  // namespace score
