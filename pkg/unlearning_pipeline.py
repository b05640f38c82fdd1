#!/usr/bin/env python
# unlearning_pipeline.py

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from prettytable import PrettyTable

# Загружаем переменные окружения из .env файла (если есть)
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass  # python-dotenv не установлен, используем системные переменные

from pipeline.ablation_agent import AXIS_FIELDS, AblationAgent
from pipeline.checkpoint_manager import CheckpointManager, ParamCheckpoint, save_checkpoint
from pipeline.circuit import build_circuit_spec
from pipeline.config import KEY_ALIASES, ConfigurationManager
from pipeline.constants import (
    ABLATION_GRID,
    CHECKPOINT_FILE,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_UNEXPECTED,
    KL_DIRECTIONS,
    MANIFEST_FILE,
    SUPPORTED_DATASETS,
)
from pipeline.data_agent import DataAgent
from pipeline.evaluation_agent import EvaluationAgent, param_delta_summary
from pipeline.export_agent import ExportAgent
from pipeline.interfaces import (
    CheckpointError,
    ConfigurationError,
    DataFormatError,
    GradientMode,
    ModelStage,
    NumericError,
    TargetSource,
    ValidationError,
)
from pipeline.monitoring import PERFORMANCE_MONITOR, log_performance_metrics
from pipeline.settings import SETTINGS
from pipeline.training_agent import TrainingAgent
from pipeline.unlearning_agent import UnlearningAgent
from pipeline.utils import config_hash, save_json

logger = logging.getLogger("unlearning_pipeline")

# Флаг CLI (dest) -> плоский ключ конфигурации
FLAG_KEYS = {
    "seed": "seed",
    "out_dir": "out_dir",
    "dataset": "dataset.name",
    "data_path": "dataset.path",
    "header": "dataset.header",
    "forget_class": "forget_class",
    "iterations": "train.iterations",
    "batch_size": "train.batch_size",
    "peak_lr": "train.peak_lr",
    "init_sigma": "train.init_sigma",
    "train_gradient_mode": "train.gradient_mode",
    "alpha": "unlearn.alpha",
    "lam": "unlearn.lambda",
    "beta": "unlearn.beta",
    "steps": "unlearn.steps",
    "lr": "unlearn.lr",
    "target": "unlearn.target_source",
    "anchor_fraction": "unlearn.anchor_fraction",
    "calibration_fraction": "unlearn.calibration_fraction",
    "forget_batch_size": "unlearn.forget_batch_size",
    "anchor_batch_size": "unlearn.anchor_batch_size",
    "unlearn_gradient_mode": "unlearn.gradient_mode",
    "kl_direction": "eval.kl_direction",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON с плоскими ключами или manifest.json прошлого запуска")
    p.add_argument("--seed", type=int, help="seed разбиения, инициализации и пакетов")
    p.add_argument("--out-dir", help="каталог результатов")
    p.add_argument("--dataset", choices=SUPPORTED_DATASETS, help="набор данных")
    p.add_argument("--data-path", help="путь к CSV (по умолчанию DATA_DIR/<файл набора>)")
    p.add_argument("--header", action="store_const", const=True, help="первая строка CSV - заголовок")
    p.add_argument("--forget-class", type=int, help="забываемый класс (0, 1, 2)")


def _add_train(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, help="число итераций Adam")
    p.add_argument("--batch-size", type=int, help="размер пакета")
    p.add_argument("--peak-lr", type=float, help="пиковый шаг косинусного расписания")
    p.add_argument("--init-sigma", type=float, help="σ начальных параметров")
    p.add_argument("--gradient-mode", dest="train_gradient_mode",
                   choices=[m.value for m in GradientMode], help="режим градиента")


def _add_unlearn(p: argparse.ArgumentParser) -> None:
    p.add_argument("--original", type=Path, help="checkpoint исходной модели (по умолчанию OUT_DIR/original)")
    p.add_argument("--alpha", type=float, help="вес якорного слагаемого α")
    p.add_argument("--lambda", dest="lam", type=float, help="вес штрафа λ·||w - w_orig||²")
    p.add_argument("--beta", type=float, help="температура цели β")
    p.add_argument("--steps", type=int, help="шагов градиентного подъёма")
    p.add_argument("--lr", type=float, help="шаг Adam при разобучении")
    p.add_argument("--target", choices=[s.value for s in TargetSource], help="целевое распределение")
    p.add_argument("--anchor-fraction", type=float, help="доля якорей A")
    p.add_argument("--calibration-fraction", type=float, help="доля F для калибровки цели")
    p.add_argument("--forget-batch-size", type=int, help="пакет по F (по умолчанию весь F)")
    p.add_argument("--anchor-batch-size", type=int, help="пакет по A (по умолчанию весь A)")
    p.add_argument("--gradient-mode", dest="unlearn_gradient_mode",
                   choices=[m.value for m in GradientMode], help="режим градиента")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    p = argparse.ArgumentParser("unlearning_pipeline: обучение, разобучение и оценка квантового классификатора")
    sub = p.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="обучить исходную модель")
    _add_common(train)
    _add_train(train)

    gold = sub.add_parser("gold", help="обучить эталонную модель без забываемого класса")
    _add_common(gold)
    _add_train(gold)

    unlearn = sub.add_parser("unlearn", help="разобучить класс")
    _add_common(unlearn)
    _add_unlearn(unlearn)

    evaluate = sub.add_parser("eval", help="оценить исходную, разобученную и эталонную модели")
    _add_common(evaluate)
    evaluate.add_argument("--original", type=Path, help="checkpoint исходной модели")
    evaluate.add_argument("--unlearned", type=Path, help="checkpoint разобученной модели")
    evaluate.add_argument("--gold", type=Path, help="checkpoint эталонной модели")
    evaluate.add_argument("--unlearned-uniform", type=Path, help="checkpoint модели с равномерной целью")
    evaluate.add_argument("--kl-direction", choices=KL_DIRECTIONS, help="направление KL")

    ablate = sub.add_parser("ablate", help="абляция по одной оси")
    _add_common(ablate)
    _add_unlearn(ablate)
    ablate.add_argument("--axis", required=True, choices=list(ABLATION_GRID), help="ось абляции")
    ablate.add_argument("--values", help="значения оси через запятую (по умолчанию стандартная сетка)")

    status = sub.add_parser("status", help="состояние каталога запуска и проверка файлов стадий")
    status.add_argument("--config", type=Path, help="JSON с плоскими ключами или manifest.json прошлого запуска")
    status.add_argument("--out-dir", help="каталог результатов")

    return p.parse_args(argv)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, dest) for dest, key in FLAG_KEYS.items() if getattr(args, dest, None) is not None}


def _parse_values(raw: Optional[str]) -> Optional[List[float]]:
    if raw is None:
        return None
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"Некорректный список значений --values: '{raw}'")


def _stage_outputs(**paths: Path) -> Dict[str, str]:
    return {name: str(path) for name, path in paths.items()}


def _load_params(manager: CheckpointManager, stage: ModelStage, path: Optional[Path] = None,
                 required: bool = True) -> Optional[np.ndarray]:
    """
    Raises:
        CheckpointError: Обязательный checkpoint отсутствует (сообщение называет модель)
    """
    path = Path(path) if path else manager.checkpoint_path(stage)
    if not path.exists():
        if required:
            raise CheckpointError(f"Не найден checkpoint модели '{stage.value}': {path}")
        return None
    return manager.load_model(stage, path).values


def _check_partition(manager: CheckpointManager, partition) -> None:
    if not manager.partition_path(ModelStage.ORIGINAL).exists():
        return
    if not manager.load_partition(ModelStage.ORIGINAL).same_split(partition):
        logger.warning("⚠️ Разбиение отличается от разбиения, на котором обучалась исходная модель")


@log_performance_metrics
def cmd_train(config_manager: ConfigurationManager, args: argparse.Namespace,
              stage: ModelStage = ModelStage.ORIGINAL) -> int:
    """Обучение исходной (или эталонной) модели"""
    gold = stage == ModelStage.GOLD
    config_manager.validate(require_forget_class=gold)
    config = config_manager.config
    runs = CheckpointManager(Path(config.out_dir))

    spec = build_circuit_spec()
    prepared = DataAgent().run(config.dataset, config.seed)
    model = TrainingAgent(spec).run(
        prepared.dataset, prepared.partition, config.train,
        gold_forget_class=config.forget_class if gold else None,
    )

    digest = config_manager.config_hash()
    stage_dir = runs.stage_dir(stage, create=True)
    outputs = _stage_outputs(
        checkpoint=runs.save_model(stage, model.params, config.dataset.name, config.seed, digest),
        history=ExportAgent().write_history(model.history_rows(), stage_dir),
        partition=runs.save_partition(stage, prepared.partition, digest),
    )
    outputs["manifest"] = str(runs.save_manifest(
        stage, args.command, config_manager.flat(), digest, outputs,
        extra={
            "best_iteration": model.best_iteration,
            "best_val_loss": model.best_val_loss,
            "exclude_class": model.exclude_class,
            "performance": PERFORMANCE_MONITOR.summary(),
        },
    ))
    runs.record_stage(stage, outputs)
    logger.info(f"✅ Модель '{stage.value}' сохранена в {stage_dir}")
    return EXIT_OK


def cmd_gold(config_manager: ConfigurationManager, args: argparse.Namespace) -> int:
    """Эталонная модель: обучение без забываемого класса"""
    return cmd_train(config_manager, args, stage=ModelStage.GOLD)


@log_performance_metrics
def cmd_unlearn(config_manager: ConfigurationManager, args: argparse.Namespace) -> int:
    """Разобучение класса от исходной модели"""
    config_manager.validate(require_forget_class=True)
    config = config_manager.config
    runs = CheckpointManager(Path(config.out_dir))

    spec = build_circuit_spec()
    w_orig = _load_params(runs, ModelStage.ORIGINAL, getattr(args, "original", None))
    prepared = DataAgent().run(config.dataset, config.seed, config.forget_class, config.unlearn.anchor_fraction)
    _check_partition(runs, prepared.partition)

    result = UnlearningAgent(spec).run(w_orig, prepared.dataset, prepared.partition, config.unlearn)

    stage = ModelStage.UNLEARNED_UNIFORM if config.unlearn.target_source == TargetSource.UNIFORM.value \
        else ModelStage.UNLEARNED
    digest = config_manager.config_hash()
    stage_dir = runs.stage_dir(stage, create=True)
    history_rows = [{"step": t, "objective": value} for t, value in enumerate(result.objective_history)]
    outputs = _stage_outputs(
        checkpoint=runs.save_model(stage, result.params, config.dataset.name, config.seed, digest),
        history=ExportAgent().write_history(history_rows, stage_dir),
        partition=runs.save_partition(stage, prepared.partition, digest),
    )
    outputs["manifest"] = str(runs.save_manifest(
        stage, args.command, config_manager.flat(), digest, outputs,
        extra={
            "target": result.target.to_dict(),
            "final_objective": result.final_objective,
            "param_delta": param_delta_summary(result.params, result.w_orig).to_dict(),
            "performance": PERFORMANCE_MONITOR.summary(),
        },
    ))
    runs.record_stage(stage, outputs)
    logger.info(f"✅ Разобученная модель сохранена в {stage_dir}")
    return EXIT_OK


@log_performance_metrics
def cmd_eval(config_manager: ConfigurationManager, args: argparse.Namespace) -> int:
    """Отчёт: полнота до/после, p(f|x), KL до gold, матрицы ошибок"""
    config_manager.validate(require_forget_class=True)
    config = config_manager.config
    runs = CheckpointManager(Path(config.out_dir))

    params = {
        ModelStage.ORIGINAL.value: _load_params(runs, ModelStage.ORIGINAL, getattr(args, "original", None)),
        ModelStage.UNLEARNED.value: _load_params(runs, ModelStage.UNLEARNED, getattr(args, "unlearned", None)),
    }
    for stage, flag in ((ModelStage.GOLD, "gold"), (ModelStage.UNLEARNED_UNIFORM, "unlearned_uniform")):
        explicit = getattr(args, flag, None)
        values = _load_params(runs, stage, explicit, required=explicit is not None)
        if values is not None:
            params[stage.value] = values

    spec = build_circuit_spec()
    prepared = DataAgent().run(config.dataset, config.seed, config.forget_class)
    report = EvaluationAgent(spec, config.eval.kl_direction).run(
        params, prepared.dataset, prepared.partition, config.forget_class
    )
    digest = config_manager.config_hash()
    report.metadata.update({"dataset": config.dataset.name, "seed": config.seed, "config_hash": digest})

    eval_dir = runs.stage_dir(ModelStage.EVAL, create=True)
    created = ExportAgent().run(report, eval_dir)
    outputs = {path.name: str(path) for path in created}
    outputs[MANIFEST_FILE] = str(runs.save_manifest(
        ModelStage.EVAL, args.command, config_manager.flat(), digest, outputs,
        extra={"models": sorted(params), "performance": PERFORMANCE_MONITOR.summary()},
    ))
    runs.record_stage(ModelStage.EVAL, outputs)
    logger.info(f"✅ Отчёт сохранён в {eval_dir}")
    return EXIT_OK


def _setting_flat(flat: Dict[str, Any], axis: str, value: float) -> Dict[str, Any]:
    """Плоская конфигурация одной настройки абляции."""
    flat = dict(flat)
    if axis == "classwise":
        flat["forget_class"] = int(value)
    else:
        name = AXIS_FIELDS[axis]
        key = next((alias for alias, target in KEY_ALIASES.items() if target == name), f"unlearn.{name}")
        flat[key] = float(value)
    return flat


@log_performance_metrics
def cmd_ablate(config_manager: ConfigurationManager, args: argparse.Namespace) -> int:
    """Абляция по одной оси от одной исходной модели"""
    config_manager.validate(require_forget_class=args.axis != "classwise")
    config = config_manager.config
    runs = CheckpointManager(Path(config.out_dir))

    spec = build_circuit_spec()
    w_orig = _load_params(runs, ModelStage.ORIGINAL, getattr(args, "original", None))
    prepared = DataAgent().run(config.dataset, config.seed)
    _check_partition(runs, prepared.partition)

    outcomes = AblationAgent(spec).run(
        args.axis, w_orig, prepared.dataset, prepared.partition, config.unlearn,
        config.forget_class, _parse_values(args.values),
    )

    axis_dir = runs.stage_dir(ModelStage.ABLATION) / args.axis
    flat = config_manager.flat()
    for outcome in outcomes:
        setting_dir = axis_dir / outcome.setting.label
        setting_flat = _setting_flat(flat, args.axis, outcome.setting.value)
        digest = config_hash({k: v for k, v in setting_flat.items() if k != "out_dir"})
        checkpoint_path = save_checkpoint(
            ParamCheckpoint(outcome.params, config.dataset.name, config.seed, ModelStage.UNLEARNED.value, digest),
            setting_dir / CHECKPOINT_FILE,
        )
        save_json({
            "command": "unlearn",
            "stage": ModelStage.UNLEARNED.value,
            "axis": args.axis,
            "setting": outcome.setting.label,
            "config_hash": digest,
            "config": setting_flat,
            "outputs": {"checkpoint": str(checkpoint_path)},
            "row": outcome.row.to_dict(),
            "objective_history": outcome.objective_history,
        }, setting_dir / MANIFEST_FILE)

    rows = [outcome.row.to_dict() for outcome in outcomes]
    created = ExportAgent().write_sweep(args.axis, rows, axis_dir)
    save_json({
        "command": args.command,
        "axis": args.axis,
        "config_hash": config_manager.config_hash(),
        "config": flat,
        "settings": [outcome.setting.label for outcome in outcomes],
        "outputs": [str(p) for p in created],
        "performance": PERFORMANCE_MONITOR.summary(),
    }, axis_dir / MANIFEST_FILE)
    runs.record_stage(ModelStage.ABLATION, {p.name: str(p) for p in created})
    logger.info(f"✅ Таблица абляции '{args.axis}' сохранена в {axis_dir}")
    return EXIT_OK


MODEL_STAGES = (ModelStage.ORIGINAL, ModelStage.GOLD, ModelStage.UNLEARNED, ModelStage.UNLEARNED_UNIFORM)


def cmd_status(config_manager: ConfigurationManager, args: argparse.Namespace) -> int:
    """
    Стадии запуска, сохранённые модели и целостность файлов успешных стадий.

    Returns:
        EXIT_IO, если состояния нет или какой-то файл не читается
    """
    runs = CheckpointManager(Path(config_manager.config.out_dir))
    summary = runs.get_run_summary()
    if summary is None:
        raise CheckpointError(f"Нет состояния запуска в {runs.run_dir}")

    state = runs.load_state()
    errors = {r.stage: r.error_message for r in state.records if not r.success}
    table = PrettyTable(["Модель", "Команда", "config_hash", "Создана"])
    table.align = "l"
    for stage in MODEL_STAGES:
        if not runs.has_model(stage):
            continue
        try:
            manifest = runs.load_manifest(stage)
        except (CheckpointError, ValueError):
            manifest = {}
        table.add_row([stage.value, manifest.get("command", "-"), manifest.get("config_hash", "-"),
                       manifest.get("created_at", "-")])

    checks = runs.validate_checkpoint_files()
    invalid = sorted(path for path, ok in checks.items() if not ok)

    print(f"Каталог: {summary['run_dir']}")
    print(f"Статус: {summary['status']}, записей: {summary['total_records']}")
    print(f"Завершены: {', '.join(summary['completed_stages']) or '-'}")
    if summary["failed_stage"]:
        print(f"Упала: {summary['failed_stage']}: {errors.get(summary['failed_stage'])}")
    print(table)
    print(f"Файлов проверено: {len(checks)}, невалидных: {len(invalid)}")
    for path in invalid:
        print(f"  ❌ {path}")

    if invalid:
        logger.error(f"❌ Невалидные файлы стадий: {len(invalid)}")
        return EXIT_IO
    return EXIT_OK


COMMANDS: Dict[str, Callable[[ConfigurationManager, argparse.Namespace], int]] = {
    "train": cmd_train,
    "gold": cmd_gold,
    "unlearn": cmd_unlearn,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "status": cmd_status,
}


def _command_stage(command: str, config_manager: ConfigurationManager) -> Optional[ModelStage]:
    """Стадия, в которую пишет команда; status ничего не пишет"""
    if command == "unlearn":
        uniform = config_manager.config.unlearn.target_source == TargetSource.UNIFORM.value
        return ModelStage.UNLEARNED_UNIFORM if uniform else ModelStage.UNLEARNED
    return {
        "train": ModelStage.ORIGINAL,
        "gold": ModelStage.GOLD,
        "eval": ModelStage.EVAL,
        "ablate": ModelStage.ABLATION,
    }.get(command)


def _record_failure(config_manager: ConfigurationManager, command: str, error: Exception) -> None:
    stage = _command_stage(command, config_manager)
    if stage is None:
        return
    try:
        CheckpointManager(Path(config_manager.config.out_dir)).record_stage(
            stage, {}, success=False, error_message=f"{type(error).__name__}: {error}"
        )
    except OSError as e:
        logger.warning(f"⚠️ Не удалось записать упавшую стадию {stage.value}: {e}")


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)

    try:
        SETTINGS.validate()
        config_manager = ConfigurationManager(args.config, overrides_from_args(args))
        config_manager.setup_logging()
        logger.info(f"🚀 Запуск команды '{args.command}'", extra={
            'dataset': config_manager.config.dataset.name,
            'seed': config_manager.config.seed,
            'config_hash': config_manager.config_hash(),
        })
        try:
            return COMMANDS[args.command](config_manager, args)
        except Exception as e:
            _record_failure(config_manager, args.command, e)
            raise

    except (ConfigurationError, ValidationError) as e:
        logger.error(f"❌ Ошибка конфигурации: {e}")
        return EXIT_CONFIG
    except (FileNotFoundError, DataFormatError, CheckpointError) as e:
        logger.error(f"❌ Ошибка данных: {e}")
        return EXIT_IO
    except NumericError as e:
        logger.error(f"❌ Численная ошибка: {e}")
        return EXIT_NUMERIC
    except ValueError as e:
        logger.error(f"❌ Некорректное значение: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"❌ Ошибка ввода-вывода: {e}")
        return EXIT_IO
    except Exception as e:
        logger.exception(f"❌ Неожиданная ошибка: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
