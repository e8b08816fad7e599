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
Chat completion transports used by the LLM agents: an HTTP client for
OpenAI compatible endpoints and a scripted mock for offline runs.
"""
import json
import os
import requests
from vermouth.log_helpers import StyleAdapter, get_logger

LOGGER = StyleAdapter(get_logger(__name__))

API_KEY_VARIABLE = "VBPSIM_LLM_API_KEY"
ENDPOINT_VARIABLE = "VBPSIM_LLM_ENDPOINT"


class TransportError(RuntimeError):
    """Raised when a chat completion cannot be obtained."""


class ChatTransport:
    """
    Base class of chat transports. Subclasses must implement `complete`.
    Implementations must be safe to call from several threads at once.
    """
    def complete(self, system, user, temperature=0.7, max_tokens=512, context=None):
        """
        Send one system and one user message and return the reply text.

        Parameters
        ----------
        system: str
        user: str
        temperature: float
        max_tokens: int
        context: dict
            firm_id, step and attempt of the request; used by scripted
            transports and for log messages

        Returns
        -------
        str
        """
        raise NotImplementedError


class HttpChatTransport(ChatTransport):
    """
    POSTs to ``<endpoint>/chat/completions``. The API key and an
    endpoint override are taken from the environment only.

    Parameters
    ----------
    model: str
    endpoint: str
    timeout: float
        seconds per request
    retries: int
        extra attempts after a failed request
    session: requests.Session
    """
    def __init__(self, model, endpoint=None, timeout=60.0, retries=2, session=None):
        endpoint = os.environ.get(ENDPOINT_VARIABLE) or endpoint
        if not endpoint:
            raise TransportError("No chat endpoint configured; set {} or the llm endpoint."
                                 .format(ENDPOINT_VARIABLE))
        self.model = model
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.timeout = timeout
        self.retries = int(retries)
        self.session = session or requests.Session()
        self.api_key = os.environ.get(API_KEY_VARIABLE)

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = "Bearer " + self.api_key
        return headers

    def complete(self, system, user, temperature=0.7, max_tokens=512, context=None):
        payload = {"model": self.model,
                   "messages": [{"role": "system", "content": system},
                                {"role": "user", "content": user}],
                   "temperature": temperature,
                   "max_tokens": max_tokens}
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                response = self.session.post(self.url, json=payload, headers=self._headers(),
                                             timeout=self.timeout)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as error:
                last_error = error
                LOGGER.warning("chat request {} of {} failed: {}", attempt + 1,
                               self.retries + 1, error, type="llm")
        raise TransportError("Chat endpoint {} failed after {} attempts: {}"
                             .format(self.url, self.retries + 1, last_error))


class MockTransport(ChatTransport):
    """
    Replays scripted replies. The script maps firm ids to a default reply
    and per step lists of replies, one per attempt; when the attempts
    outnumber the list the last reply is repeated::

        {"default": "...",
         "firms": {"F1": {"default": {...}, "steps": {"3": ["...", {...}]}}}}

    Replies given as JSON objects are sent as their JSON text.
    """
    def __init__(self, script):
        if not isinstance(script, dict):
            raise TransportError("A mock script must be a JSON object.")
        self.script = script

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as file_:
            try:
                return cls(json.load(file_))
            except json.JSONDecodeError as error:
                raise TransportError("Mock script {} is not valid JSON: {}".format(path, error)) from error

    @staticmethod
    def _as_text(reply):
        if isinstance(reply, str):
            return reply
        return json.dumps(reply)

    def complete(self, system, user, temperature=0.7, max_tokens=512, context=None):
        context = context or {}
        firm_script = self.script.get("firms", {}).get(str(context.get("firm_id")), {})
        replies = firm_script.get("steps", {}).get(str(context.get("step")))
        if replies is not None:
            if not isinstance(replies, list):
                replies = [replies]
            attempt = min(int(context.get("attempt", 0)), len(replies) - 1)
            return self._as_text(replies[attempt])
        if "default" in firm_script:
            return self._as_text(firm_script["default"])
        if "default" in self.script:
            return self._as_text(self.script["default"])
        raise TransportError("Mock script has no reply for firm {} at step {}."
                             .format(context.get("firm_id"), context.get("step")))
