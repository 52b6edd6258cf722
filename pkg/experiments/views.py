from pathlib import Path

from django.core.exceptions import ValidationError
from django.http import FileResponse, Http404, JsonResponse

from .models import SimulationRun


def reports_view(request):
    """Persisted runs, newest first"""
    runs = SimulationRun.objects.all()
    scenario = request.GET.get('scenario')
    if scenario:
        runs = runs.filter(scenario=scenario)

    data = [
        {
            'id': str(run.id),
            'scenario': run.scenario,
            'source': run.source,
            'created_at': run.created_at.isoformat(),
            'seed': run.seed,
            'omega_inj': run.omega_inj,
            'max_error_deg': run.max_error_deg,
            'mean_error_deg': run.mean_error_deg,
            'max_error_deg_no_saturation': run.max_error_deg_no_saturation,
            'mean_error_deg_no_saturation': run.mean_error_deg_no_saturation,
            'runtime': run.runtime,
            'has_csv': bool(run.csv_path),
        }
        for run in runs[:200]
    ]
    return JsonResponse({'count': len(data), 'runs': data})


def export_data(request):
    """Download the CSV file written by a run"""
    run_id = request.GET.get('run')
    if not run_id:
        return JsonResponse({'error': 'run parameter required'}, status=400)
    try:
        run = SimulationRun.objects.get(id=run_id)
    except (SimulationRun.DoesNotExist, ValidationError):
        raise Http404('Run not found')

    path = Path(run.csv_path)
    if not run.csv_path or not path.is_file():
        raise Http404('CSV file no longer available')
    return FileResponse(path.open('rb'), as_attachment=True, filename=path.name, content_type='text/csv')
