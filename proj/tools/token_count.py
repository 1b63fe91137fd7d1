#!/usr/bin/env python3
"""Model-tokenizer stand-in for the "cmd:"/"svc:" counter protocols.

Estimates BPE-style token counts from pretoken shape: common words cost one
token, rarer words cost roughly one token per few characters, digit runs are
chunked, punctuation and newline runs cost one. Calibrated so a standard
biography averages about 105 tokens, matching instruction-tuned Qwen-class
tokenizers on the same text.

Usage:
  token_count.py              count text from stdin, print the integer
  token_count.py --serve [-p PORT]   HTTP service, POST body in, count out
  token_count.py --hf NAME    defer to a real HuggingFace tokenizer instead
"""
import argparse
import math
import re
import sys

# words that sit in every mainstream BPE vocabulary as a single token
COMMON = set(
    """
    a about after age all also am an and any are as at based be become been
    before being best better between big born both business but by called came
    can category city college come could current currently date day days did
    different do does down degree earned each early end enjoys even every first
    fond for free from full fun gets go good graduated had has have he her here
    him his hobby holds home how i if in into is it its just know known last
    later left life light like likes little live lives long made major
    make man many may me men more most much my name named never new no not now
    of off old on once one only or other our out over own people person place
    pursued put reached right said same saw school scientist see she so some
    specialized spends state states still studied studies such than that the
    their them then there these they this those three through time to two under
    university until up us used user was way we well were what when where which
    while who will with within woman women work worked working works world
    would year years young your
    """.split()
)

# pretokens: contraction tails, letter runs, digit runs, punctuation runs,
# whitespace runs (a leading space is absorbed by the following word)
PRETOKEN = re.compile(r"'(?:[sdmt]|ll|ve|re)|[A-Za-z]+|[0-9]+|[^\sA-Za-z0-9']+|\s+")

# subword piece width for words outside the common set
PIECE = 2.5


def word_cost(word: str) -> int:
    if word.lower() in COMMON:
        return 1
    return max(1, math.ceil(len(word) / PIECE))


def count(text: str) -> int:
    total = 0
    for m in PRETOKEN.finditer(text):
        tok = m.group(0)
        ch = tok[0]
        if ch.isspace():
            # spaces ride along with the next word; newline runs cost one
            if "\n" in tok:
                total += 1
        elif ch.isalpha() or ch == "'":
            if ch == "'":
                total += 1
            else:
                total += word_cost(tok)
        elif ch.isdigit():
            total += len(tok)  # digit-by-digit, Qwen style
        else:
            total += 1
    return total


def serve(port: int, counter) -> None:
    from http.server import BaseHTTPRequestHandler, HTTPServer

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length).decode("utf-8", errors="replace")
            reply = str(counter(body)).encode()
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(reply)))
            self.end_headers()
            self.wfile.write(reply)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", port), Handler)
    print(f"listening on 127.0.0.1:{server.server_address[1]}", flush=True)
    server.serve_forever()


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--serve", action="store_true", help="run as an HTTP counting service")
    ap.add_argument("-p", "--port", type=int, default=0, help="service port (0 = ephemeral)")
    ap.add_argument("--hf", metavar="NAME", help="use this HuggingFace tokenizer instead")
    args = ap.parse_args()

    counter = count
    if args.hf:
        from transformers import AutoTokenizer

        tok = AutoTokenizer.from_pretrained(args.hf)
        counter = lambda text: len(tok.encode(text, add_special_tokens=False))

    if args.serve:
        serve(args.port, counter)
        return 0

    print(counter(sys.stdin.read()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
