#include <fstream>

#include <gtest/gtest.h>

#include "mynd/datastore/stub_server.hpp"
#include "mynd/datastore/upload_queue.hpp"
#include "support.hpp"

using namespace mynd;
using namespace mynd::datastore;
using mynd::test::TempDir;

namespace {

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

// A port nothing listens on: bind a server, note its port, shut it down.
int closed_port() {
  TempDir tmp("closed");
  StubServer s(tmp.path());
  const int port = s.start(0);
  s.stop();
  return port;
}

} // namespace

TEST(HttpTransport, UploadsThroughStubServer) {
  TempDir server_root("server"), queue_dir("queue");
  StubServer server(server_root.path());
  server.start(0);
  UploadQueue q(queue_dir.path());
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(q.enqueue(bytes_of("envelope " + std::to_string(i)), "tok", "t"));
  HttpTransport http(server.url());
  const auto rep = q.flush(http);
  EXPECT_TRUE(rep.ok()) << rep.error.value_or("");
  EXPECT_EQ(rep.sent(), 3u);
  EXPECT_EQ(server.unique_entries(), 3u);
  for (const auto& id : ids) EXPECT_TRUE(std::filesystem::exists(server_root / ("recordings/" + id + ".env")));
  // nothing left to resend
  EXPECT_TRUE(q.flush(http).results.empty());
  EXPECT_EQ(server.posts(), 3u);
}

TEST(HttpTransport, RepeatedPostOfSameEntryIsStoredOnce) {
  TempDir server_root("server");
  StubServer server(server_root.path());
  server.start(0);
  HttpTransport http(server.url());
  const Bytes body = bytes_of("x");
  const std::string id = digest_hex(body);
  for (int i = 0; i < 3; ++i) {
    const auto r = http.send({id, "tok", &body});
    EXPECT_TRUE(r.acknowledged);
    EXPECT_EQ(r.echoed_id, id);
  }
  EXPECT_EQ(server.posts(), 3u);
  EXPECT_EQ(server.unique_entries(), 1u);
}

TEST(HttpTransport, BadEntryIdIsRejected) {
  TempDir server_root("server");
  StubServer server(server_root.path());
  server.start(0);
  HttpTransport http(server.url());
  const Bytes body = bytes_of("x");
  const auto r = http.send({"../escape", "tok", &body});
  EXPECT_FALSE(r.acknowledged);
  EXPECT_FALSE(r.unreachable);
}

TEST(HttpTransport, ServesLocalisedMessages) {
  TempDir server_root("server");
  std::filesystem::create_directories(server_root / "messages");
  std::ofstream(server_root / "messages/de.json") << R"([{"id":"m1","text":"Hallo","locale":"de"}])";
  std::ofstream(server_root / "messages.json") << R"([{"id":"m2","text":"Hello"}])";
  StubServer server(server_root.path());
  server.start(0);
  HttpTransport http(server.url());
  MessageInbox inbox;
  const auto de = fetch_messages(http, inbox, "de");
  ASSERT_EQ(de.size(), 1u);
  EXPECT_EQ(de[0].text, "Hallo");
  const auto en = fetch_messages(http, inbox, "en");
  ASSERT_EQ(en.size(), 1u);
  EXPECT_EQ(en[0].id, "m2");
}

TEST(HttpTransport, UnreachableServerLeavesEntriesPending) {
  TempDir queue_dir("queue");
  UploadQueue q(queue_dir.path());
  q.enqueue(bytes_of("a"), "tok", "t");
  HttpTransport http("http://127.0.0.1:" + std::to_string(closed_port()), 1);
  const auto rep = q.flush(http);
  EXPECT_FALSE(rep.ok());
  EXPECT_NE(rep.error->find("unreachable"), std::string::npos);
  ASSERT_EQ(q.pending().size(), 1u);
  EXPECT_EQ(q.pending()[0].attempts, 1);
  MessageInbox inbox;
  EXPECT_TRUE(fetch_messages(http, inbox).empty());
}
