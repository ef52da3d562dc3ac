"""
Configuração de logs estruturados do semitts
"""

import logging
import logging.config
import json
import sys
import os
from datetime import datetime
from typing import Dict, Any, Optional
import traceback
from pathlib import Path

from . import __version__

LOGGER_NAMES = (
    'semitts',
    'semitts.train',
    'semitts.dsp',
    'semitts.eval',
    'semitts.sweep',
    'semitts.performance',
)


class StructuredFormatter(logging.Formatter):
    """
    Formatter personalizado para logs estruturados em JSON
    """

    def __init__(self, service_name: str = "semitts", version: str = __version__):
        super().__init__()
        self.service_name = service_name
        self.version = version
        self.hostname = os.getenv('HOSTNAME', 'localhost')

    def format(self, record: logging.LogRecord) -> str:
        """
        Formata o log record em JSON estruturado
        """
        log_entry = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "service": self.service_name,
            "version": self.version,
            "hostname": self.hostname,
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
            "process": record.process,
        }
        if getattr(record, 'run_name', None):
            log_entry["run"] = record.run_name
        if getattr(record, 'config_hash', None):
            log_entry["config_hash"] = record.config_hash
        if hasattr(record, 'extra_data'):
            log_entry["extra"] = record.extra_data
        if record.exc_info:
            log_entry["exception"] = {
                "type": record.exc_info[0].__name__ if record.exc_info[0] else None,
                "message": str(record.exc_info[1]) if record.exc_info[1] else None,
                "traceback": traceback.format_exception(*record.exc_info)
            }
        for component in ("train", "dsp", "eval", "sweep"):
            if record.name.startswith(f"semitts.{component}"):
                log_entry["component"] = component
                break
        if hasattr(record, 'step'):
            log_entry["step"] = record.step
        if hasattr(record, 'duration'):
            log_entry["duration_ms"] = record.duration
        return json.dumps(log_entry, ensure_ascii=False, default=str)


class ContextFilter(logging.Filter):
    """
    Filtro que garante os campos de contexto usados pelo formato simples
    """
    def filter(self, record: logging.LogRecord) -> bool:
        record.timestamp_unix = record.created
        if not hasattr(record, 'run_name'):
            record.run_name = '-'
        if not hasattr(record, 'config_hash'):
            record.config_hash = '-'
        return True


class TrainingLogger:
    """
    Logger especializado para passos de treino, validação, avaliação e células do sweep
    """
    def __init__(self, logger_name: str = "semitts.performance"):
        self.logger = logging.getLogger(logger_name)

    def log_train_step(self, phase: str, step: int, mel_l1: float, stop_bce: float,
                       grad_norm: float, seconds: float):
        """Log de um passo de otimização"""
        extra = {
            'step': step,
            'duration': seconds * 1000.0,
            'extra_data': {
                'type': 'train_step',
                'phase': phase,
                'metrics': {'mel_l1': mel_l1, 'stop_bce': stop_bce, 'grad_norm': grad_norm}
            }
        }
        self.logger.info(
            f"{phase} passo {step} - mel_l1={mel_l1:.5f} stop_bce={stop_bce:.5f} |g|={grad_norm:.3f}",
            extra=extra
        )

    def log_validation(self, step: int, loss: float, best: float, improved: bool):
        """Log de avaliação no conjunto de validação"""
        extra = {
            'step': step,
            'extra_data': {'type': 'validation', 'loss': loss, 'best': best, 'improved': improved}
        }
        marker = "melhor" if improved else f"melhor={best:.5f}"
        self.logger.info(f"Validação passo {step} - perda={loss:.5f} ({marker})", extra=extra)

    def log_utterance_eval(self, utterance_id: str, duration_ms: float, success: bool,
                           mcd_db: Optional[float] = None, error: Optional[str] = None):
        """Log de avaliação MCD de um enunciado"""
        extra = {
            'duration': duration_ms,
            'extra_data': {'type': 'utterance_eval', 'id': utterance_id, 'mcd_db': mcd_db, 'error': error}
        }
        level = logging.INFO if success else logging.ERROR
        status = f"MCD={mcd_db:.3f} dB" if success else f"FALHOU ({error})"
        self.logger.log(level, f"Avaliação {utterance_id} - {status} - {duration_ms:.0f}ms", extra=extra)

    def log_sweep_cell(self, cell: str, duration_ms: float, success: bool, skipped: bool = False,
                       error: Optional[str] = None):
        """Log de célula do sweep"""
        extra = {
            'duration': duration_ms,
            'extra_data': {'type': 'sweep_cell', 'cell': cell, 'success': success, 'skipped': skipped, 'error': error}
        }
        level = logging.INFO if success else logging.ERROR
        status = "PULADA (concluída)" if skipped else ("CONCLUÍDA" if success else f"FALHOU ({error})")
        self.logger.log(level, f"Célula {cell} - {status} - {duration_ms:.0f}ms", extra=extra)


def setup_logging(
    service_name: str = "semitts",
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    enable_console: bool = True,
    enable_json: bool = False
) -> Dict[str, Any]:
    """
    Configura o sistema de logging estruturado
    """
    if log_file:
        log_dir = Path(log_file).parent
        log_dir.mkdir(parents=True, exist_ok=True)
    config = {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'structured': {'()': StructuredFormatter, 'service_name': service_name, 'version': __version__},
            'simple': {'format': '%(asctime)s - %(name)s - %(levelname)s - [%(run_name)s] - %(message)s', 'datefmt': '%Y-%m-%d %H:%M:%S'}
        },
        'filters': {'context_filter': {'()': ContextFilter}},
        'handlers': {},
        'loggers': {name: {'level': log_level, 'handlers': [], 'propagate': False} for name in LOGGER_NAMES},
        'root': {'level': log_level, 'handlers': []}
    }
    if enable_console:
        config['handlers']['console'] = {
            'class': 'logging.StreamHandler', 'level': log_level, 'formatter': 'structured' if enable_json else 'simple',
            'filters': ['context_filter'], 'stream': sys.stderr
        }
        for logger_name in config['loggers']:
            config['loggers'][logger_name]['handlers'].append('console')
        config['root']['handlers'].append('console')
    if log_file:
        config['handlers']['file'] = {
            'class': 'logging.handlers.RotatingFileHandler', 'level': log_level, 'formatter': 'structured',
            'filters': ['context_filter'], 'filename': log_file, 'maxBytes': 50 * 1024 * 1024, 'backupCount': 5, 'encoding': 'utf-8'
        }
        for logger_name in config['loggers']:
            config['loggers'][logger_name]['handlers'].append('file')
        config['root']['handlers'].append('file')
    logging.config.dictConfig(config)
    loggers = {
        'main': logging.getLogger('semitts'),
        'train': logging.getLogger('semitts.train'),
        'eval': logging.getLogger('semitts.eval'),
        'sweep': logging.getLogger('semitts.sweep'),
        'performance': TrainingLogger()
    }
    loggers['main'].debug("Sistema de logging configurado", extra={'extra_data': {'config': {'service_name': service_name, 'log_level': log_level, 'log_file': log_file, 'enable_console': enable_console, 'enable_json': enable_json}}})
    return loggers


def add_run_context(run_name: str, config_hash: Optional[str] = None):
    """Marca todos os registros seguintes com o nome da execução e o hash da configuração"""
    old_factory = logging.getLogRecordFactory()
    base_factory = getattr(old_factory, '_semitts_base', old_factory)

    def record_factory(*args, **kwargs):
        record = base_factory(*args, **kwargs)
        record.run_name = run_name
        record.config_hash = config_hash
        return record
    record_factory._semitts_base = base_factory
    logging.setLogRecordFactory(record_factory)
