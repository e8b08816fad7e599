# Copyright 2026 The vbpsim developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Test the scripted and the HTTP chat transports.
"""
import logging
import pytest
import requests
from vbpsim.src.transport import (API_KEY_VARIABLE, ENDPOINT_VARIABLE, HttpChatTransport,
                                  MockTransport, TransportError)


class FakeResponse:

    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError("status {}".format(self.status))

    def json(self):
        return self.payload


class FakeSession:
    """
    Answers with the queued items; exceptions are raised.
    """
    def __init__(self, *answers):
        self.answers = list(answers)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        answer = self.answers.pop(0)
        if isinstance(answer, Exception):
            raise answer
        return answer


def _completion(text):
    return FakeResponse({"choices": [{"message": {"content": text}}]})


def test_mock_attempts():
    transport = MockTransport({"firms": {"F1": {"steps": {"2": ["first", {"bid_price": 1}]}}},
                               "default": "fallback"})
    context = {"firm_id": "F1", "step": 2}
    assert transport.complete("s", "u", context=dict(context, attempt=0)) == "first"
    assert transport.complete("s", "u", context=dict(context, attempt=1)) == '{"bid_price": 1}'
    # the last reply repeats
    assert transport.complete("s", "u", context=dict(context, attempt=5)) == '{"bid_price": 1}'
    assert transport.complete("s", "u", context={"firm_id": "F1", "step": 3}) == "fallback"
    assert transport.complete("s", "u", context={"firm_id": "F7", "step": 1}) == "fallback"


def test_mock_missing_reply():
    with pytest.raises(TransportError):
        MockTransport({"firms": {}}).complete("s", "u", context={"firm_id": "F1", "step": 1})


def test_mock_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text("{not json")
    with pytest.raises(TransportError):
        MockTransport.from_file(path)


def test_http_request(monkeypatch):
    monkeypatch.setenv(API_KEY_VARIABLE, "secret")
    monkeypatch.delenv(ENDPOINT_VARIABLE, raising=False)
    session = FakeSession(_completion("hello"))
    transport = HttpChatTransport("some-model", "http://llm.local/v1/", timeout=5,
                                  session=session)
    assert transport.complete("system", "user", temperature=0.2, max_tokens=64) == "hello"
    call = session.calls[0]
    assert call["url"] == "http://llm.local/v1/chat/completions"
    assert call["headers"]["Authorization"] == "Bearer secret"
    assert call["timeout"] == 5
    assert call["json"]["model"] == "some-model"
    assert call["json"]["temperature"] == 0.2
    assert call["json"]["max_tokens"] == 64
    assert [message["role"] for message in call["json"]["messages"]] == ["system", "user"]


def test_http_endpoint_from_environment(monkeypatch):
    monkeypatch.setenv(ENDPOINT_VARIABLE, "http://env.local")
    monkeypatch.delenv(API_KEY_VARIABLE, raising=False)
    session = FakeSession(_completion("ok"))
    transport = HttpChatTransport("m", "http://config.local", session=session)
    transport.complete("s", "u")
    assert session.calls[0]["url"] == "http://env.local/chat/completions"
    assert "Authorization" not in session.calls[0]["headers"]


def test_http_retries(monkeypatch, caplog):
    caplog.set_level(logging.WARNING)
    monkeypatch.delenv(ENDPOINT_VARIABLE, raising=False)
    session = FakeSession(requests.ConnectionError("down"), FakeResponse({}, status=500),
                          _completion("finally"))
    transport = HttpChatTransport("m", "http://llm.local", retries=2, session=session)
    assert transport.complete("s", "u") == "finally"
    assert len(session.calls) == 3
    assert sum(1 for record in caplog.records if "failed" in record.getMessage()) == 2


def test_http_gives_up(monkeypatch):
    monkeypatch.delenv(ENDPOINT_VARIABLE, raising=False)
    session = FakeSession(FakeResponse({"unexpected": True}), FakeResponse({"choices": []}))
    transport = HttpChatTransport("m", "http://llm.local", retries=1, session=session)
    with pytest.raises(TransportError):
        transport.complete("s", "u")


def test_http_needs_endpoint(monkeypatch):
    monkeypatch.delenv(ENDPOINT_VARIABLE, raising=False)
    with pytest.raises(TransportError):
        HttpChatTransport("m", None, session=FakeSession())
