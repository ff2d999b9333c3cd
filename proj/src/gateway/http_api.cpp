#include "emarket/gateway/http_api.hpp"

#include <atomic>

#include "httplib.h"

namespace emarket::gateway {

namespace {

using httplib::Request;
using httplib::Response;

int market_status(marketplace::MarketErrc c) {
  using E = marketplace::MarketErrc;
  switch (c) {
    case E::InvalidFields:
    case E::StarsOutOfRange: return 400;
    case E::WrongRole:
    case E::NotCounterparty: return 403;
    case E::UnknownUser:
    case E::UnknownListing:
    case E::UnknownRequest: return 404;
    case E::NotOpen:
    case E::RaceLost:
    case E::DuplicateRating:
    case E::DuplicateUser: return 409;
    case E::PeriodNotSettled: return 422;
  }
  return 400;
}

int agreement_status(agreements::AgreementErrc c) {
  using E = agreements::AgreementErrc;
  switch (c) {
    case E::InvalidTerms:
    case E::DuplicateParties: return 400;
    case E::UnknownParty:
    case E::BadSignature: return 403;
    case E::UnknownAgreement: return 404;
    case E::AlreadyActive:
    case E::NotActive:
    case E::DuplicateAgreement: return 409;
    case E::MissingCounterSignature: return 422;
  }
  return 400;
}

int settlement_status(settlement::SettlementErrc c) {
  using E = settlement::SettlementErrc;
  switch (c) {
    case E::InvalidPolicy: return 400;
    case E::UnknownInvoice: return 404;
    case E::NotActive:
    case E::PeriodMismatch: return 409;
    case E::MissingReading:
    case E::InsufficientTokens: return 422;
  }
  return 400;
}

int metering_status(metering::MeteringErrc c) {
  using E = metering::MeteringErrc;
  switch (c) {
    case E::InvalidQuantities:
    case E::Malformed: return 400;
    case E::UnknownFirmware: return 403;
    case E::UnknownDevice: return 404;
    case E::DuplicateDevice: return 409;
  }
  return 400;
}

int reject_status(metering::RejectReason r) {
  switch (r) {
    case metering::RejectReason::UnattestedDevice:
    case metering::RejectReason::BadSignature: return 403;
    case metering::RejectReason::SequenceReplay: return 409;
    case metering::RejectReason::BadQuantities:
    case metering::RejectReason::SequenceGap: return 422;
  }
  return 422;
}

Json parse_body(const Request& req) {
  if (req.body.empty()) return Json::object();
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw BadRequest("MalformedJson", "request body must be a JSON object");
  return j;
}

void send(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::optional<std::string> query(const Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto v = req.get_param_value(key);
  if (v.empty()) return std::nullopt;
  return v;
}

Hash256 hash_param(const std::string& s, const char* what) {
  try {
    return Hash256::from_hex(s);
  } catch (const std::exception&) {
    throw BadRequest("InvalidFields", std::string(what) + " must be 64 hex characters");
  }
}

std::int64_t int_field(const Json& j, const char* key, std::int64_t fallback) {
  return j.contains(key) ? require_int(j, key) : fallback;
}

Json user_json(const Engine& engine, const marketplace::UserProfile& p) {
  Json j = p.to_json();
  j["average_x10"] = p.average_x10();
  auto b = engine.balance(p.account);
  j["cash_c"] = b.cash_c;
  j["tokens_mt"] = b.tokens_mt;
  if (auto k = engine.ledger().custodial_key(p.account)) j["public_key"] = k->public_key().hex();
  return j;
}

template <class T>
Json array_of(const std::vector<T>& items) {
  Json out = Json::array();
  for (const auto& i : items) out.push_back(i.to_json());
  return out;
}

}  // namespace

ApiError map_error(const std::exception& e) {
  if (auto* x = dynamic_cast<const marketplace::MarketError*>(&e))
    return {market_status(x->code()), marketplace::to_string(x->code()), x->what()};
  if (auto* x = dynamic_cast<const agreements::AgreementError*>(&e))
    return {agreement_status(x->code()), agreements::to_string(x->code()), x->what()};
  if (auto* x = dynamic_cast<const settlement::SettlementError*>(&e))
    return {settlement_status(x->code()), settlement::to_string(x->code()), x->what()};
  if (auto* x = dynamic_cast<const metering::MeteringError*>(&e))
    return {metering_status(x->code()), metering::to_string(x->code()), x->what()};
  if (auto* x = dynamic_cast<const ledger::LedgerError*>(&e)) {
    int status = x->code() == ledger::LedgerErrc::LedgerUnavailable ? 503
                 : x->code() == ledger::LedgerErrc::UnknownAccount  ? 404
                                                                     : 400;
    return {status, ledger::to_string(x->code()), x->what()};
  }
  if (auto* x = dynamic_cast<const NotFound*>(&e)) return {404, x->code(), x->what()};
  if (auto* x = dynamic_cast<const BadRequest*>(&e)) {
    int status = x->code() == "AttestationFailed"                                      ? 403
                 : x->code() == "ProvisioningDisabled" || x->code() == "ReservedAccount" ? 409
                                                                                       : 400;
    return {status, x->code(), x->what()};
  }
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const Json::exception*>(&e))
    return {400, "InvalidFields", e.what()};
  return {500, "Internal", e.what()};
}

struct HttpApi::Impl {
  Engine& engine;
  httplib::Server server;
  std::atomic<bool> bound{false};

  explicit Impl(Engine& e) : engine(e) { routes(); }

  using Handler = std::function<void(const Request&, Response&)>;

  Handler guarded(Handler fn) {
    return [fn = std::move(fn)](const Request& req, Response& res) {
      try {
        fn(req, res);
      } catch (const std::exception& e) {
        auto err = map_error(e);
        send(res, err.status, err.to_json());
      }
    };
  }

  void get(const std::string& path, Handler fn) {
    server.Get("/v1" + path, guarded(std::move(fn)));
  }
  void post(const std::string& path, Handler fn) {
    server.Post("/v1" + path, guarded(std::move(fn)));
  }

  void routes() {
    auto health = [](const Request&, Response& res) { send(res, 200, {{"status", "ok"}}); };
    server.Get("/healthz", health);
    server.Get("/v1/healthz", health);

    post("/users", [this](const Request& req, Response& res) {
      auto p = engine.register_user(marketplace::UserProfile::from_json(parse_body(req)));
      send(res, 201, user_json(engine, p));
    });
    get(R"(/users/([^/]+))", [this](const Request& req, Response& res) {
      auto p = engine.user(req.matches[1]);
      if (!p) throw NotFound("UnknownUser", "unknown user '" + std::string(req.matches[1]) + "'");
      send(res, 200, user_json(engine, *p));
    });

    post("/devices", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      DeviceView view;
      if (body.contains("quote"))
        view = engine.enroll_device(metering::MeterDevice::from_json(require_field(body, "device")),
                                    metering::AttestationQuote::from_json(require_field(body, "quote")));
      else
        view = engine.provision_device(require_string(body, "firmware"), require_string(body, "premises_id"));
      send(res, 201, view.to_json());
    });

    post("/readings", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      bool pay = !body.contains("pay") || body.at("pay").get<bool>();
      body.erase("pay");
      bool signed_by_device = body.contains("signature");
      if (!body.contains("sequence")) body["sequence"] = 0;
      auto reading = metering::MeterReading::from_json(body);
      if (!signed_by_device) reading = engine.simulate_reading(reading);
      auto out = engine.submit_reading(reading, pay);
      if (!out.ingest.accepted) {
        auto reason = *out.ingest.reason;
        send(res, reject_status(reason),
             ApiError{0, metering::to_string(reason), "reading rejected: " + std::string(metering::to_string(reason))}
                 .to_json());
        return;
      }
      Json j = out.to_json();
      j["reading"] = reading.to_json();
      send(res, 201, j);
    });

    post("/listings", [this](const Request& req, Response& res) {
      send(res, 201, engine.post_listing(marketplace::Listing::from_json(parse_body(req))).to_json());
    });
    get("/listings", [this](const Request& req, Response& res) {
      std::optional<metering::Source> source;
      if (auto s = query(req, "source")) {
        source = metering::parse_source(*s);
        if (!source) throw BadRequest("InvalidFields", "unknown source '" + *s + "'");
      }
      send(res, 200, {{"listings", array_of(engine.search(query(req, "region"), source))}});
    });
    post("/requests", [this](const Request& req, Response& res) {
      send(res, 201, engine.post_request(marketplace::Request::from_json(parse_body(req))).to_json());
    });
    get("/matches", [this](const Request& req, Response& res) {
      auto id = query(req, "request_id");
      if (!id) throw BadRequest("InvalidFields", "request_id is required");
      send(res, 200, {{"matches", array_of(engine.matches(*id))}});
    });

    post("/agreements", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      auto start = int_field(body, "start_period", 1);
      Agreement a;
      if (body.contains("listing_id")) {
        a = engine.accept_match(require_string(body, "listing_id"), require_string(body, "request_id"), start);
      } else {
        auto kind = agreements::parse_agreement_kind(require_string(body, "kind"));
        if (!kind) throw BadRequest("InvalidFields", "unknown agreement kind");
        agreements::Parties parties{require_string(body, "owner"), require_string(body, "consumer"), std::nullopt};
        if (body.contains("grid_operator")) parties.grid_operator = require_string(body, "grid_operator");
        a = engine.propose(parties, agreements::terms_from_json(*kind, require_field(body, "terms")),
                           require_string(body, "premises_id"), start);
      }
      send(res, 201, a.to_json());
    });
    get(R"(/agreements/([0-9a-fA-F]+))", [this](const Request& req, Response& res) {
      auto a = engine.agreement(hash_param(req.matches[1], "agreement id"));
      if (!a) throw NotFound("UnknownAgreement", "no agreement " + std::string(req.matches[1]));
      send(res, 200, a->to_json());
    });
    post(R"(/agreements/([0-9a-fA-F]+)/sign)", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      std::optional<Signature> sig;
      if (body.contains("signature")) sig = Signature::from_hex(require_string(body, "signature"));
      send(res, 200,
           engine.sign_agreement(hash_param(req.matches[1], "agreement id"), require_string(body, "party"), sig)
               .to_json());
    });
    post(R"(/agreements/([0-9a-fA-F]+)/terminate)", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      std::map<AccountId, Signature> sigs;
      if (body.contains("signatures"))
        for (const auto& [who, s] : body.at("signatures").items()) sigs[who] = Signature::from_hex(s.get<std::string>());
      send(res, 200,
           engine.terminate_agreement(hash_param(req.matches[1], "agreement id"), require_int(body, "at_period"), sigs)
               .to_json());
    });

    get("/invoices", [this](const Request& req, Response& res) {
      std::optional<std::uint64_t> period;
      if (auto p = query(req, "period")) {
        try {
          period = std::stoull(*p);
        } catch (const std::exception&) {
          throw BadRequest("InvalidFields", "period must be a non-negative integer");
        }
      }
      send(res, 200, {{"invoices", array_of(engine.invoices(query(req, "account"), period))}});
    });

    post("/tokens/redeem", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      auto mode = settlement::parse_redeem_mode(body.value("mode", std::string("Cash")));
      if (!mode) throw BadRequest("InvalidFields", "mode must be Cash or EnergyCredit");
      auto out = engine.redeem(require_string(body, "account"), require_int(body, "amount_mt"), *mode);
      send(res, 200, {{"amount_c", out.amount_c}, {"balance", out.balance.to_json()}});
    });

    post("/ratings", [this](const Request& req, Response& res) {
      auto body = parse_body(req);
      auto p = engine.rate(require_string(body, "rater"), hash_param(require_string(body, "agreement_id"), "agreement_id"),
                           require_int(body, "period_id"), require_int(body, "stars"));
      send(res, 201, user_json(engine, p));
    });

    get("/ledger/head", [this](const Request&, Response& res) {
      send(res, 200, {{"hash", engine.ledger().head().hex()}, {"height", engine.ledger().height()}});
    });
    get(R"(/ledger/blocks/([0-9a-fA-F]+))", [this](const Request& req, Response& res) {
      auto b = engine.ledger().block(hash_param(req.matches[1], "block hash"));
      if (!b) throw NotFound("NotFound", "no block " + std::string(req.matches[1]));
      Json j = b->to_json();
      j["hash"] = b->hash().hex();
      send(res, 200, j);
    });
  }
};

HttpApi::HttpApi(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  impl_->bound = bound > 0;
  return bound;
}

bool HttpApi::serve() { return impl_->bound && impl_->server.listen_after_bind(); }

void HttpApi::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpApi::running() const { return impl_->server.is_running(); }

}  // namespace emarket::gateway
