#!/usr/bin/env python3
"""
Reference Exec classifier hook.

Reads one JSON query per line from stdin and answers with the threshold rule:
``{"decision": "wanted"}`` when s + N >= h, otherwise ``{"decision": "other"}``.
"""

import json
import sys


def decide(query):
    return 'wanted' if query['s'] + query['N'] >= query['h'] else 'other'


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        query = json.loads(line)
        sys.stdout.write(json.dumps({'decision': decide(query)}) + '\n')
        sys.stdout.flush()
    return 0


if __name__ == '__main__':
    sys.exit(main())
