#!/usr/bin/env python3
"""
Reference Http classifier hook.

Serves ``POST /classify`` with the same threshold rule as threshold_hook.py,
so a model can bind its classifier to an HTTP endpoint instead of builtin code.
"""

from datetime import datetime

import structlog
from flask import Flask, jsonify, request
from jsonschema import ValidationError, validate

from config import Config
from hook_utils import HOOK_REQUEST_SCHEMA
from logging_config import configure_logging

# Setup structured logging
logger = structlog.get_logger(__name__)


def create_app() -> Flask:
    app = Flask(__name__)
    stats = {'queries': 0, 'started_at': datetime.utcnow().isoformat()}

    @app.route('/classify', methods=['POST'])
    def classify():
        query = request.get_json(silent=True)
        try:
            validate(instance=query, schema=HOOK_REQUEST_SCHEMA)
        except ValidationError as e:
            logger.error("Invalid classification query", error=e.message)
            return jsonify({'error': f'Invalid query: {e.message}'}), 400

        stats['queries'] += 1
        decision = 'wanted' if query['s'] + query['N'] >= query['h'] else 'other'
        logger.debug("Query classified", t=query['t'], j=query['j'], decision=decision)
        return jsonify({'decision': decision})

    @app.route('/health')
    def health():
        return jsonify({'status': 'healthy', 'service': 'threshold-hook', **stats})

    return app


if __name__ == '__main__':
    configure_logging()
    logger.info("Starting threshold hook server", host=Config.HOOK_SERVER_HOST, port=Config.HOOK_SERVER_PORT)
    create_app().run(host=Config.HOOK_SERVER_HOST, port=Config.HOOK_SERVER_PORT, debug=Config.DEBUG)
