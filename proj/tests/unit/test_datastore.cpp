#include <algorithm>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "mynd/datastore/container.hpp"
#include "mynd/datastore/envelope.hpp"
#include "mynd/datastore/questionnaire_file.hpp"
#include "mynd/datastore/transport.hpp"
#include "mynd/datastore/upload_queue.hpp"
#include "support.hpp"

using namespace mynd;
using namespace mynd::datastore;
using mynd::test::random_dataset;
using mynd::test::TempDir;

namespace {

FormatErrc read_error(const Bytes& b) {
  try {
    read_dataset(b);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "read_dataset accepted corrupt input";
  return FormatErrc::InvalidDataset;
}

RecordingDataset small_dataset() {
  RecordingDataset ds;
  ds.subject_id = "s";
  ds.scenario_id = "d1-resting";
  ds.samples.assign(4 * 10, 0.0f);
  ds.markers.push_back({10, marker_code::kBreak, "end"});
  return ds;
}

// Records every delivery; fails while `down` is set.
class FakeTransport : public Transport {
public:
  SendResult send(const Delivery& d) override {
    SendResult r;
    if (down) {
      r.unreachable = true;
      r.error = "offline";
      return r;
    }
    delivered.push_back(d.entry_id);
    r.acknowledged = true;
    r.echoed_id = echo_wrong ? "x" : d.entry_id;
    return r;
  }
  std::optional<std::string> get_messages(const std::string&) override {
    if (down) return std::nullopt;
    return messages;
  }

  bool down = false;
  bool echo_wrong = false;
  std::string messages = "[]";
  std::vector<std::string> delivered;
};

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

} // namespace

TEST(Container, RoundTripIsLosslessAndCanonical) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto ds = random_dataset(seed);
    const Bytes b = write_dataset(ds);
    const auto back = read_dataset(b);
    ASSERT_EQ(back, ds) << "seed " << seed;
    ASSERT_EQ(write_dataset(back), b) << "seed " << seed;
  }
}

TEST(Container, NegativeZeroSurvivesBitExactly) {
  auto ds = random_dataset(5);
  ASSERT_FALSE(ds.samples.empty());
  const auto back = read_dataset(write_dataset(ds));
  EXPECT_TRUE(std::signbit(back.samples[0]));
}

TEST(Container, EmptyDataset) {
  RecordingDataset ds;
  const auto back = read_dataset(write_dataset(ds));
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.frames(), 0u);
}

TEST(Container, MarkerAtFrameCountIsAllowed) {
  const auto ds = small_dataset();
  EXPECT_EQ(read_dataset(write_dataset(ds)), ds);
  auto bad = ds;
  bad.markers[0].sample_index = 11;
  try {
    write_dataset(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrc::MarkerOutOfRange);
  }
}

TEST(Container, RejectsUnsortedMarkersAndInvalidDatasets) {
  auto ds = small_dataset();
  ds.markers = {{5, 1, "a"}, {3, 2, "a"}};
  EXPECT_THROW(write_dataset(ds), FormatError);
  ds = small_dataset();
  ds.samples[3] = NAN;
  EXPECT_THROW(write_dataset(ds), FormatError);
  ds = small_dataset();
  ds.samples.pop_back();
  EXPECT_THROW(write_dataset(ds), FormatError);
  ds = small_dataset();
  ds.day = 0;
  EXPECT_THROW(write_dataset(ds), FormatError);
}

TEST(Container, CorruptInputsAreClassified) {
  const Bytes good = write_dataset(random_dataset(3));
  Bytes b = good;
  b[0] = 'X';
  EXPECT_EQ(read_error(b), FormatErrc::BadMagic);
  b = good;
  b[4] = 9;
  EXPECT_EQ(read_error(b), FormatErrc::UnsupportedVersion);
  b = good;
  b.push_back(0);
  EXPECT_EQ(read_error(b), FormatErrc::TrailingData);
  b = good;
  b[10] = '[';
  EXPECT_EQ(read_error(b), FormatErrc::MalformedHeader);
}

TEST(Container, EveryTruncationIsDetected) {
  const Bytes good = write_dataset(random_dataset(12));
  for (std::size_t n = 0; n < good.size(); ++n) {
    const Bytes cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
    const auto code = read_error(cut);
    EXPECT_EQ(code, n < 4 ? FormatErrc::BadMagic : FormatErrc::Truncated) << "prefix " << n;
  }
}

TEST(Container, MarkedTrialsPairsStartAndEnd) {
  RecordingDataset ds = small_dataset();
  ds.samples.assign(4 * 100, 1.0f);
  ds.markers = {{0, marker_code::kBlockStart, "b"},
                {2, marker_code::kTrialStart, "memory"},
                {40, marker_code::kTrialEnd, "memory"},
                {41, marker_code::kBreak, ""},
                {50, marker_code::kTrialStart, "subtraction"},
                {90, marker_code::kTrialEnd, "subtraction"}};
  const auto trials = marked_trials(ds);
  ASSERT_EQ(trials.size(), 2u);
  EXPECT_EQ(trials[0].begin, 2u);
  EXPECT_EQ(trials[0].end, 40u);
  EXPECT_EQ(trials[1].label, "subtraction");
  ds.markers.pop_back();
  EXPECT_THROW(marked_trials(ds), FormatError);
}

TEST(Envelope, RoundTrip) {
  const auto kp = KeyPair::generate();
  for (std::uint64_t seed : {1, 2, 3}) {
    const Bytes plain = write_dataset(random_dataset(seed));
    const Bytes env = encrypt_envelope(plain, kp.public_key);
    EXPECT_EQ(decrypt_envelope(env, kp.secret_key), plain);
  }
  const Bytes empty;
  EXPECT_EQ(decrypt_envelope(encrypt_envelope(empty, kp.public_key), kp.secret_key), empty);
}

TEST(Envelope, FreshKeyAndNoncePerEnvelope) {
  const auto kp = KeyPair::generate();
  const Bytes plain = bytes_of("same payload");
  EXPECT_NE(encrypt_envelope(plain, kp.public_key), encrypt_envelope(plain, kp.public_key));
}

TEST(Envelope, EverySingleByteTamperFails) {
  const auto kp = KeyPair::generate();
  const Bytes env = encrypt_envelope(write_dataset(small_dataset()), kp.public_key);
  for (std::size_t i = 0; i < env.size(); ++i) {
    Bytes t = env;
    t[i] ^= 0x01;
    EXPECT_THROW(decrypt_envelope(t, kp.secret_key), AuthenticationError) << "byte " << i;
  }
  Bytes shorter(env.begin(), env.end() - 1);
  EXPECT_THROW(decrypt_envelope(shorter, kp.secret_key), AuthenticationError);
  Bytes longer = env;
  longer.push_back(0);
  EXPECT_THROW(decrypt_envelope(longer, kp.secret_key), AuthenticationError);
}

TEST(Envelope, WrongKeyFails) {
  const auto a = KeyPair::generate(), b = KeyPair::generate();
  const Bytes env = encrypt_envelope(bytes_of("hello"), a.public_key);
  EXPECT_THROW(decrypt_envelope(env, b.secret_key), AuthenticationError);
}

TEST(Envelope, KeyFilesRoundTrip) {
  TempDir dir("keys");
  const auto kp = KeyPair::generate();
  save_public_key((dir / "k.pub").string(), kp.public_key);
  save_secret_key((dir / "k.key").string(), kp.secret_key);
  const auto pk = load_public_key((dir / "k.pub").string());
  const auto sk = load_secret_key((dir / "k.key").string());
  EXPECT_EQ(pk, kp.public_key);
  EXPECT_EQ(decrypt_envelope(encrypt_envelope(bytes_of("x"), pk), sk), bytes_of("x"));
  EXPECT_THROW(load_public_key((dir / "k.key").string()), std::runtime_error);
  EXPECT_THROW(load_secret_key((dir / "missing").string()), std::runtime_error);
}

TEST(SubjectId, UrlSafeAndDistinct) {
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto id = generate_subject_id();
    ASSERT_EQ(id.size(), 22u);
    for (char c : id) ASSERT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') << id;
    seen.insert(id);
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(UploadQueue, FlushesOldestFirst) {
  TempDir dir("queue");
  UploadQueue q(dir.path());
  std::vector<std::string> ids;
  for (int i = 0; i < 5; ++i) ids.push_back(q.enqueue(bytes_of("env" + std::to_string(i)), "s", "t"));
  FakeTransport t;
  const auto rep = q.flush(t);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.sent(), 5u);
  EXPECT_EQ(t.delivered, ids);
  EXPECT_TRUE(q.pending().empty());
}

TEST(UploadQueue, FailedAttemptsStayPendingAndAreCounted) {
  TempDir dir("queue");
  UploadQueue q(dir.path());
  q.enqueue(bytes_of("a"), "s", "t");
  q.enqueue(bytes_of("b"), "s", "t");
  FakeTransport t;
  t.down = true;
  for (int k = 1; k <= 3; ++k) {
    const auto rep = q.flush(t);
    EXPECT_FALSE(rep.ok());
    EXPECT_NE(rep.error->find("unreachable"), std::string::npos);
    for (const auto& e : q.pending()) EXPECT_EQ(e.attempts, k);
  }
  EXPECT_EQ(q.pending().size(), 2u);
  t.down = false;
  EXPECT_TRUE(q.flush(t).ok());
  for (const auto& e : q.entries()) {
    EXPECT_EQ(e.state, EntryState::Sent);
    EXPECT_EQ(e.attempts, 4);
  }
}

TEST(UploadQueue, MismatchedAcknowledgementIsNotSent) {
  TempDir dir("queue");
  UploadQueue q(dir.path());
  q.enqueue(bytes_of("a"), "s", "t");
  FakeTransport t;
  t.echo_wrong = true;
  EXPECT_FALSE(q.flush(t).ok());
  EXPECT_EQ(q.pending().size(), 1u);
}

TEST(UploadQueue, StateSurvivesReopen) {
  TempDir dir("queue");
  std::string first, second;
  {
    UploadQueue q(dir.path());
    first = q.enqueue(bytes_of("one"), "s", "t1");
    FakeTransport t;
    q.flush(t);
    second = q.enqueue(bytes_of("two"), "s", "t2");
    t.down = true;
    q.flush(t);
  }
  // a torn trailing line from an interrupted append is ignored
  std::ofstream(dir / "queue.log", std::ios::app) << "{\"op\":\"enq";
  UploadQueue q(dir.path());
  const auto entries = q.entries();
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].id, first);
  EXPECT_EQ(entries[0].state, EntryState::Sent);
  EXPECT_EQ(entries[1].id, second);
  EXPECT_EQ(entries[1].attempts, 1);
  ASSERT_EQ(q.pending().size(), 1u);
  EXPECT_EQ(q.pending()[0].created_at, "t2");
}

TEST(UploadQueue, EnqueueIsIdempotentAndEmptyFlushIsClean) {
  TempDir dir("queue");
  UploadQueue q(dir.path());
  FakeTransport t;
  const auto empty = q.flush(t);
  EXPECT_TRUE(empty.ok());
  EXPECT_TRUE(empty.results.empty());
  const auto a = q.enqueue(bytes_of("same"), "s", "t");
  const auto b = q.enqueue(bytes_of("same"), "s", "t");
  EXPECT_EQ(a, b);
  EXPECT_EQ(q.entries().size(), 1u);
  EXPECT_EQ(a, digest_hex(bytes_of("same")));
}

TEST(UploadQueue, DirectoryTransportStoresEnvelopes) {
  TempDir dir("queue"), remote("remote");
  UploadQueue q(dir.path());
  const auto id = q.enqueue(bytes_of("payload"), "s", "t");
  DirectoryTransport t(remote.path());
  EXPECT_TRUE(q.flush(t).ok());
  std::ifstream is(remote / ("recordings/" + id + ".env"), std::ios::binary);
  const std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  EXPECT_EQ(body, "payload");
  DirectoryTransport gone(remote / "absent");
  q.enqueue(bytes_of("other"), "s", "t");
  const auto rep = q.flush(gone);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(q.pending().size(), 1u);
}

TEST(MessageInbox, DeduplicatesAcrossFetches) {
  FakeTransport t;
  t.messages = R"([{"id":"a","text":"hello"},{"id":"b","text":"bye","locale":"en"}])";
  MessageInbox inbox;
  EXPECT_EQ(fetch_messages(t, inbox).size(), 2u);
  t.messages = R"([{"id":"a","text":"hello"},{"id":"c","text":"new"}])";
  const auto second = fetch_messages(t, inbox);
  ASSERT_EQ(second.size(), 1u);
  EXPECT_EQ(second[0].id, "c");
}

TEST(MessageInbox, OfflineYieldsNothing) {
  FakeTransport t;
  t.down = true;
  MessageInbox inbox;
  EXPECT_TRUE(fetch_messages(t, inbox).empty());
  EXPECT_TRUE(inbox.diagnostics().empty());
}

TEST(MessageInbox, MalformedEntriesAreSkippedWithDiagnostic) {
  FakeTransport t;
  t.messages = R"([{"id":"a","text":"ok"},{"id":3,"text":"bad"},"junk",{"id":"d"}])";
  MessageInbox inbox;
  const auto got = fetch_messages(t, inbox);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].locale, "en");
  EXPECT_EQ(inbox.diagnostics().size(), 3u);
  t.messages = "{not json";
  EXPECT_TRUE(fetch_messages(t, inbox).empty());
  EXPECT_EQ(inbox.diagnostics().size(), 4u);
}

TEST(QuestionnaireFile, RoundTrip) {
  QuestionnaireResult q;
  q.questionnaire_id = "daily";
  q.subject_id = "abc";
  q.day = 4;
  q.started_at = "2024-03-04T08:00:00.000Z";
  q.completed_at = "2024-03-04T08:01:00.000Z";
  q.responses.push_back({"motivation", "likert", 4, 5, "2024-03-04T08:00:30.000Z"});
  q.responses.push_back({"notes", "text", std::string("fine, \"really\""), std::nullopt, "t"});
  const auto back = read_questionnaire_result(write_questionnaire_result(q));
  EXPECT_EQ(back, q);
  EXPECT_EQ(back.int_value("motivation"), 4);
  EXPECT_FALSE(back.int_value("notes").has_value());
  EXPECT_THROW(read_questionnaire_result("{}"), std::invalid_argument);
  EXPECT_THROW(read_questionnaire_result(R"({"format":"mynd-questionnaire"})"), std::invalid_argument);
}
