"""JSON Schemas for the wire protocol; every response must validate."""

HEALTH_SCHEMA = {
    "type": "object",
    "required": ["status", "backend", "embedding_shape"],
    "properties": {
        "status": {"enum": ["ok", "degraded"]},
        "backend": {"enum": ["mock", "real"]},
        "embedding_shape": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
    },
    "additionalProperties": False,
}

ENCODE_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["prompt"],
    "properties": {"prompt": {"type": "string", "minLength": 1}},
    "additionalProperties": False,
}

ENCODE_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["embedding", "shape"],
    "properties": {
        "embedding": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "shape": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
    },
    "additionalProperties": False,
}

GENERATE_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["prompt", "embedding", "shape", "seed", "steps", "guidance",
                 "width", "height", "return_image"],
    "properties": {
        "prompt": {"type": "string"},
        "embedding": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "shape": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "seed": {"type": "integer"},
        "steps": {"type": "integer", "minimum": 1},
        "guidance": {"type": "number", "minimum": 0},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "return_image": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SCORE_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["aesthetic", "clip", "image_id", "image_png_b64"],
    "properties": {
        "aesthetic": {"type": "number"},
        "clip": {"type": "number"},
        "image_id": {"type": "string"},
        "image_png_b64": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error"],
    "properties": {"error": {"type": "string"}},
    "additionalProperties": False,
}
